use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quarter::Quarter;

/// Covariate marginals of one country. Covariates are drawn independently,
/// which makes the true propensity exactly logistic in the encoded design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountryProfile {
    /// Probabilities for the age bands `18-34`, `35-49`, `50-64`, `65+`.
    pub age_probs: [f64; 4],
    /// Probabilities for ISCED levels `2`, `3`, `5`, `6`.
    pub isced_probs: [f64; 4],
    pub female_share: f64,
    /// Children under 15 are Binomial(3, p).
    pub child_prob: f64,
    pub two_adult_share: f64,
    /// Income midpoints are log-normal around this median.
    pub income_median: f64,
    pub income_log_sd: f64,
    /// Distances are uniform on this range (km).
    pub distance_km: (f64, f64),
    /// Outcome level before seasonal terms (grams per standard quarter).
    pub baseline: f64,
    /// Seasonal terms for Q1..Q4.
    pub seasonal: [f64; 4],
    /// Price level in Euro cents per 100 g.
    pub price: f64,
    pub price_seasonal: [f64; 4],
    pub package_size: f64,
}

impl CountryProfile {
    pub fn denmark() -> CountryProfile {
        CountryProfile {
            age_probs: [0.15, 0.30, 0.30, 0.25],
            isced_probs: [0.20, 0.45, 0.25, 0.10],
            female_share: 0.60,
            child_prob: 0.25,
            two_adult_share: 0.55,
            income_median: 3500.0,
            income_log_sd: 0.5,
            distance_km: (0.0, 350.0),
            baseline: 800.0,
            seasonal: [40.0, -20.0, -60.0, 40.0],
            price: 90.0,
            price_seasonal: [1.0, 0.0, -2.0, 1.0],
            package_size: 250.0,
        }
    }

    pub fn germany() -> CountryProfile {
        CountryProfile {
            age_probs: [0.10, 0.25, 0.35, 0.30],
            isced_probs: [0.15, 0.55, 0.20, 0.10],
            female_share: 0.70,
            child_prob: 0.45,
            two_adult_share: 0.60,
            income_median: 2800.0,
            income_log_sd: 0.5,
            distance_km: (0.0, 200.0),
            baseline: 760.0,
            seasonal: [30.0, -10.0, -50.0, 30.0],
            price: 60.0,
            price_seasonal: [0.5, 0.0, -1.0, 0.5],
            package_size: 250.0,
        }
    }
}

/// Linear coefficients of the outcome trend: each calendar year since 2009
/// adds `loading · X` to the outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrendLoadings {
    pub children: f64,
    pub household_size: f64,
    pub female: f64,
    /// Per age band above the youngest.
    pub age: [f64; 3],
}

impl Default for TrendLoadings {
    fn default() -> Self {
        TrendLoadings { children: 8.0, household_size: 0.0, female: 0.0, age: [0.0; 3] }
    }
}

/// How the share bought abroad depends on distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AbroadModel {
    /// `share · L(d)` with `L(d) = 1 / (1 + exp((d - midpoint) / width))`;
    /// `share` moves from `pre_share` to `tax_share` while the tax is levied.
    /// Households and quarters get log-normal multiplicative factors.
    Logistic {
        pre_share: f64,
        tax_share: f64,
        midpoint_km: f64,
        width_km: f64,
        household_log_sd: f64,
        quarter_log_sd: f64,
    },
    /// Random-intercept model, quadratic in distance with tax interactions:
    /// `b0 + b1 d + b2 d² + tax (b3 + b4 d + b5 d²) + α_i + ε`.
    Quadratic { coefficients: [f64; 6], household_sd: f64, noise_sd: f64 },
}

impl AbroadModel {
    /// Crossover at 70 km.
    pub fn quadratic_default() -> AbroadModel {
        AbroadModel::Quadratic {
            coefficients: [0.30, -0.001, 2e-6, 0.0651, -0.001, 1e-6],
            household_sd: 0.03,
            noise_sd: 0.02,
        }
    }
}

impl Default for AbroadModel {
    fn default() -> Self {
        AbroadModel::Logistic {
            pre_share: 0.02,
            tax_share: 0.08,
            midpoint_km: 50.0,
            width_km: 10.0,
            household_log_sd: 0.2,
            quarter_log_sd: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_dk: usize,
    pub n_de: usize,
    pub first_quarter: Quarter,
    pub last_quarter: Quarter,
    pub product: String,
    pub dk: CountryProfile,
    pub de: CountryProfile,
    /// Outcome trends loading on covariates; with differing covariate
    /// distributions they break unconditional parallel trends only.
    pub covariate_trends: bool,
    pub trend: TrendLoadings,
    /// Planted effect in every tax quarter.
    pub att_tax: f64,
    /// Planted effect in every post-tax quarter.
    pub att_post: f64,
    /// Extra effect in 2011Q3, before the tax.
    pub anticipation_bump: f64,
    /// Shift post-tax effects so that each calendar quarter carries the same
    /// total effect; seasonal adjustment then leaves the planted tax-window
    /// effects intact.
    pub balance_seasons: bool,
    /// Effect multipliers for the low, medium and high income groups.
    pub income_multipliers: [f64; 3],
    /// Multiplier for Danish households closer than `border_km`.
    pub border_multiplier: f64,
    pub border_km: f64,
    pub household_sd: f64,
    pub noise_sd: f64,
    /// Price rise for Danish households while the tax is levied.
    pub pass_through: f64,
    /// Price rise for German households closer than `border_km`.
    pub border_spillover: f64,
    pub price_household_sd: f64,
    pub price_noise_sd: f64,
    pub abroad: AbroadModel,
    /// Share of households that never buy the product (they buy a decoy).
    pub never_purchaser_share: f64,
    /// Reference quarter for the truth table.
    pub reference: Quarter,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_dk: 2000,
            n_de: 2000,
            first_quarter: Quarter::STUDY_START,
            last_quarter: Quarter::STUDY_END,
            product: "butter".into(),
            dk: CountryProfile::denmark(),
            de: CountryProfile::germany(),
            covariate_trends: true,
            trend: TrendLoadings::default(),
            att_tax: 10.0,
            att_post: 0.0,
            anticipation_bump: 0.0,
            balance_seasons: true,
            income_multipliers: [1.0; 3],
            border_multiplier: 1.0,
            border_km: 50.0,
            household_sd: 80.0,
            noise_sd: 40.0,
            pass_through: 0.0,
            border_spillover: 0.0,
            price_household_sd: 5.0,
            price_noise_sd: 3.0,
            abroad: AbroadModel::default(),
            never_purchaser_share: 0.0,
            reference: Quarter::new(2011, 1).expect("valid"),
        }
    }
}

fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(what.to_string()))
    }
}

fn probs_ok(p: &[f64]) -> bool {
    p.iter().all(|&v| (0.0..=1.0).contains(&v)) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-9
}

impl SimConfig {
    /// No effects, no covariate trends.
    pub fn null() -> SimConfig {
        SimConfig { att_tax: 0.0, covariate_trends: false, ..SimConfig::default() }
    }

    pub fn grid(&self) -> Vec<Quarter> {
        Quarter::range(self.first_quarter, self.last_quarter)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.n_dk >= 2 && self.n_de >= 2, "need at least two households per country")?;
        check(self.first_quarter <= self.last_quarter, "first quarter after last quarter")?;
        check(!self.product.trim().is_empty() && !self.product.contains(','), "product label must be non-empty without commas")?;
        for (name, c) in [("dk", &self.dk), ("de", &self.de)] {
            check(probs_ok(&c.age_probs), &format!("{name}.age_probs must be probabilities summing to 1"))?;
            check(probs_ok(&c.isced_probs), &format!("{name}.isced_probs must be probabilities summing to 1"))?;
            for (label, p) in [("female_share", c.female_share), ("child_prob", c.child_prob), ("two_adult_share", c.two_adult_share)] {
                check((0.0..=1.0).contains(&p), &format!("{name}.{label} must lie in [0, 1]"))?;
            }
            check(c.income_median > 0.0 && c.income_log_sd >= 0.0, &format!("{name}: income parameters must be positive"))?;
            check(
                c.distance_km.0 >= 0.0 && c.distance_km.0 <= c.distance_km.1,
                &format!("{name}.distance_km must be a non-negative range"),
            )?;
            check(c.package_size > 0.0, &format!("{name}.package_size must be > 0"))?;
            check(c.price > 0.0, &format!("{name}.price must be > 0"))?;
        }
        for (label, v) in [
            ("household_sd", self.household_sd),
            ("noise_sd", self.noise_sd),
            ("price_household_sd", self.price_household_sd),
            ("price_noise_sd", self.price_noise_sd),
            ("border_km", self.border_km),
        ] {
            check(v >= 0.0 && v.is_finite(), &format!("{label} must be a finite value >= 0"))?;
        }
        check((0.0..1.0).contains(&self.never_purchaser_share), "never_purchaser_share must lie in [0, 1)")?;
        match &self.abroad {
            AbroadModel::Logistic { pre_share, tax_share, width_km, household_log_sd, quarter_log_sd, .. } => {
                check((0.0..=1.0).contains(pre_share) && (0.0..=1.0).contains(tax_share), "abroad shares must lie in [0, 1]")?;
                check(*width_km > 0.0, "abroad width_km must be > 0")?;
                check(*household_log_sd >= 0.0 && *quarter_log_sd >= 0.0, "abroad scales must be >= 0")?;
            }
            AbroadModel::Quadratic { household_sd, noise_sd, .. } => {
                check(*household_sd >= 0.0 && *noise_sd >= 0.0, "abroad scales must be >= 0")?;
            }
        }
        Ok(())
    }
}
