use std::path::Path;

use crate::error::{Error, Result};
use crate::panel::Outcome;
use crate::quarter::{Quarter, Window};

use super::config::AbroadModel;

/// Per-quarter effect profile of one outcome, with the per-household
/// multipliers of the treated arm.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedEffect {
    /// Planted effect per grid quarter before multipliers.
    pub profile: Vec<f64>,
    /// `(household_id, multiplier)` for every treated household.
    pub multipliers: Vec<(String, f64)>,
}

impl PlantedEffect {
    pub fn mean_multiplier(&self) -> f64 {
        mean_of(self.multipliers.iter().map(|(_, m)| *m))
    }

    fn multiplier_of(&self, ids: &[&str]) -> f64 {
        mean_of(self.multipliers.iter().filter(|(id, _)| ids.contains(&id.as_str())).map(|(_, m)| *m))
    }
}

fn mean_of(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Everything planted by one simulation.
///
/// Effects act on the outcome before seasonal adjustment. Adjustment removes
/// per-(country, calendar quarter) means, which absorbs `m̄ · ε̄(season)` from
/// the treated arm; the estimand is therefore
/// `m̄ [(ε(q) - ε̄(s(q))) - (ε(r) - ε̄(s(r)))]`. With calendar-balanced
/// profiles the season means coincide and this equals `m̄ (ε(q) - ε(r))`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimTruth {
    pub quarters: Vec<Quarter>,
    pub reference: Quarter,
    /// Planted weight effect on Danish households.
    pub weight: PlantedEffect,
    /// Price pass-through on Danish households (multiplier 1).
    pub price: PlantedEffect,
    /// Price spillover on German households closer than `border_km`.
    pub spillover: PlantedEffect,
    pub border_km: f64,
    /// Treated minus control mean of the covariate trend loading; the
    /// unconditional estimator picks up `trend_gap · (year(q) - year(r))`.
    pub trend_gap: f64,
    pub abroad: AbroadModel,
    /// Income group (`low`, `medium`, `high`) of every treated household.
    pub income_groups: Vec<(String, &'static str)>,
}

impl SimTruth {
    fn effect(&self, outcome: Outcome) -> Result<&PlantedEffect> {
        match outcome {
            Outcome::Weight => Ok(&self.weight),
            Outcome::PricePer100 => Ok(&self.price),
            other => Err(Error::InvalidConfig(format!("no planted truth for outcome {other}"))),
        }
    }

    fn index(&self, q: Quarter) -> Result<usize> {
        let first = *self.quarters.first().ok_or_else(|| Error::invalid("empty grid"))?;
        let i = q.since(first);
        if i < 0 || i as usize >= self.quarters.len() {
            return Err(Error::invalid(format!("quarter {q} outside the simulated grid")));
        }
        Ok(i as usize)
    }

    /// Mean planted effect per calendar season over the grid.
    pub fn season_means(profile: &[f64], quarters: &[Quarter]) -> [f64; 4] {
        let mut sum = [0.0; 4];
        let mut n = [0usize; 4];
        for (v, q) in profile.iter().zip(quarters) {
            sum[q.season()] += v;
            n[q.season()] += 1;
        }
        std::array::from_fn(|s| if n[s] > 0 { sum[s] / n[s] as f64 } else { 0.0 })
    }

    fn projected(&self, e: &PlantedEffect, subset_mean: f64, q: Quarter, r: Quarter) -> Result<f64> {
        let means = SimTruth::season_means(&e.profile, &self.quarters);
        let (iq, ir) = (self.index(q)?, self.index(r)?);
        let raw = e.profile[iq] - e.profile[ir];
        let seasonal = means[q.season()] - means[r.season()];
        Ok(subset_mean * raw - e.mean_multiplier() * seasonal)
    }

    /// Estimand ATT(q) against reference `r` for Danish against German
    /// households.
    pub fn att(&self, outcome: Outcome, q: Quarter, r: Quarter) -> Result<f64> {
        let e = self.effect(outcome)?;
        self.projected(e, e.mean_multiplier(), q, r)
    }

    /// Estimand when only the listed Danish households form the treated arm
    /// (the control arm and the seasonal adjustment are unchanged).
    pub fn att_subset(&self, outcome: Outcome, ids: &[&str], q: Quarter, r: Quarter) -> Result<f64> {
        let e = self.effect(outcome)?;
        self.projected(e, e.multiplier_of(ids), q, r)
    }

    /// Estimand for one income group of Danish households.
    pub fn att_income_group(&self, outcome: Outcome, group: &str, q: Quarter, r: Quarter) -> Result<f64> {
        let ids: Vec<&str> = self.income_groups.iter().filter(|(_, g)| *g == group).map(|(id, _)| id.as_str()).collect();
        self.att_subset(outcome, &ids, q, r)
    }

    pub fn window(&self, outcome: Outcome, window: &Window, r: Quarter) -> Result<f64> {
        let vals = window.quarters.iter().map(|&q| self.att(outcome, q, r)).collect::<Result<Vec<_>>>()?;
        Ok(mean_of(vals.into_iter()))
    }

    /// Bias of the unconditional estimator of ATT(q) from covariate trends.
    pub fn trend_bias(&self, q: Quarter, r: Quarter) -> f64 {
        self.trend_gap * (q.year() - r.year()) as f64
    }

    pub fn window_trend_bias(&self, window: &Window, r: Quarter) -> f64 {
        mean_of(window.quarters.iter().map(|&q| self.trend_bias(q, r)))
    }

    /// Effect on border Germans against far Germans. Both arms share the
    /// seasonal adjustment, so no projection is needed.
    pub fn spillover_att(&self, q: Quarter, r: Quarter) -> Result<f64> {
        let p = &self.spillover.profile;
        Ok(p[self.index(q)?] - p[self.index(r)?])
    }

    pub fn spillover_window(&self, window: &Window, r: Quarter) -> Result<f64> {
        let vals = window.quarters.iter().map(|&q| self.spillover_att(q, r)).collect::<Result<Vec<_>>>()?;
        Ok(mean_of(vals.into_iter()))
    }

    /// Planted quadratic coefficients of the random-effects share model.
    pub fn re_coefficients(&self) -> Option<[f64; 6]> {
        match self.abroad {
            AbroadModel::Quadratic { coefficients, .. } => Some(coefficients),
            AbroadModel::Logistic { .. } => None,
        }
    }

    /// Smallest positive distance where the planted tax shift
    /// `b3 + b4 d + b5 d²` changes sign.
    pub fn re_crossover(&self) -> Option<f64> {
        let b = self.re_coefficients()?;
        crossover(b[3], b[4], b[5])
    }

    /// Expected Danish share bought abroad for distances uniform on
    /// `[lo, hi)` (clipped to `range`) under the logistic model.
    pub fn expected_share_abroad(&self, lo: f64, hi: f64, range: (f64, f64), tax: bool) -> Option<f64> {
        let AbroadModel::Logistic { pre_share, tax_share, midpoint_km, width_km, .. } = self.abroad else {
            return None;
        };
        let (a, b) = (lo.max(range.0), hi.min(range.1));
        if !(b > a) {
            return None;
        }
        // Closed form of the mean of 1 / (1 + exp((d - m) / w)) over [a, b].
        let softplus = |x: f64| if x > 30.0 { x } else { x.exp().ln_1p() };
        let integral = (b - a) - width_km * (softplus((b - midpoint_km) / width_km) - softplus((a - midpoint_km) / width_km));
        let share = if tax { tax_share } else { pre_share };
        Some(share * integral / (b - a))
    }
}

/// Smallest positive root of `c0 + c1 d + c2 d²`.
pub fn crossover(c0: f64, c1: f64, c2: f64) -> Option<f64> {
    let roots: Vec<f64> = if c2 == 0.0 {
        if c1 == 0.0 {
            vec![]
        } else {
            vec![-c0 / c1]
        }
    } else {
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if disc < 0.0 {
            vec![]
        } else {
            let s = disc.sqrt();
            vec![(-c1 - s) / (2.0 * c2), (-c1 + s) / (2.0 * c2)]
        }
    };
    roots.into_iter().filter(|&d| d > 0.0 && d.is_finite()).min_by(f64::total_cmp)
}

/// `kind,key,quarter,value` rows of the planted truth.
pub fn truth_rows(truth: &SimTruth) -> Result<Vec<[String; 4]>> {
    let r = truth.reference;
    let mut rows = Vec::new();
    let mut push = |kind: &str, key: &str, q: Option<Quarter>, v: f64| {
        rows.push([kind.to_string(), key.to_string(), q.map(|q| q.to_string()).unwrap_or_default(), v.to_string()]);
    };
    for outcome in [Outcome::Weight, Outcome::PricePer100] {
        let e = truth.effect(outcome)?;
        for (i, &q) in truth.quarters.iter().enumerate() {
            push("planted", outcome.as_str(), Some(q), e.profile[i]);
        }
        for &q in &truth.quarters {
            push("att", outcome.as_str(), Some(q), truth.att(outcome, q, r)?);
        }
        for w in [Window::tax(), Window::post()] {
            if w.quarters.iter().all(|q| truth.quarters.contains(q)) {
                push("window", &format!("{}:{}", outcome.as_str(), w.name), None, truth.window(outcome, &w, r)?);
            }
        }
        push("mean_multiplier", outcome.as_str(), None, e.mean_multiplier());
    }
    for group in ["low", "medium", "high"] {
        for &q in &truth.quarters {
            push("subgroup", &format!("weight:{group}"), Some(q), truth.att_income_group(Outcome::Weight, group, q, r)?);
        }
    }
    for &q in &truth.quarters {
        push("spillover", "price_per_100", Some(q), truth.spillover_att(q, r)?);
    }
    push("trend_gap", "weight", None, truth.trend_gap);
    if let Some(b) = truth.re_coefficients() {
        for (i, v) in b.iter().enumerate() {
            push("re", &format!("b{i}"), None, *v);
        }
        if let Some(c) = truth.re_crossover() {
            push("re", "crossover_km", None, c);
        }
    }
    Ok(rows)
}

pub fn write_truth(path: &Path, truth: &SimTruth) -> Result<()> {
    let rows = truth_rows(truth)?;
    crate::panel::write_csv_atomic(path, &["kind", "key", "quarter", "value"], rows)
}
