use nalgebra::DMatrix;

use super::sample::Sample;
use crate::error::{Error, Result};
use crate::numerics::{logistic_irls, pseudo_inverse_sym, DesignMatrix, LinearFit, LogisticFit};
use crate::panel::{Covariate, CovariateEncoder, PreparedPanel};
use crate::quarter::Quarter;

/// Fitted propensities are clamped to this range before building weights.
pub const PROPENSITY_CLAMP: (f64, f64) = (0.001, 0.999);

/// Share of comparison households that may hit the clamp before overlap is
/// declared violated.
pub const MAX_CLAMPED_SHARE: f64 = 0.01;

const HISTOGRAM_BINS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct OverlapReport {
    pub min_treated: f64,
    pub max_treated: f64,
    pub min_control: f64,
    pub max_control: f64,
    /// Counts over ten equal-width bins of [0, 1].
    pub histogram_treated: [usize; HISTOGRAM_BINS],
    pub histogram_control: [usize; HISTOGRAM_BINS],
    pub clamped_controls: usize,
    pub separation: bool,
}

/// First-stage fits shared by every quarter of an event study.
#[derive(Clone, Debug)]
pub struct NuisanceFit {
    pub members: Vec<usize>,
    pub treated: Vec<bool>,
    /// Propensity covariates of the members, independent columns only.
    pub design: DesignMatrix,
    /// Outcome-model covariates of the members, all encoded columns.
    pub outcome_design: DesignMatrix,
    pub propensity: LogisticFit,
    /// Fitted propensities after clamping, aligned with `members`.
    pub clamped: Vec<f64>,
    pub overlap: OverlapReport,
    /// Per-quarter outcome regressions on comparison households, filled in
    /// by the event study.
    pub outcome_models: Vec<(Quarter, LinearFit)>,
    pub(crate) hessian_inverse: DMatrix<f64>,
}

/// Keep the members whose covariates in `set` are all present.
pub fn complete_covariates(panel: &PreparedPanel, sample: &Sample, set: &[Covariate]) -> Result<Sample> {
    let encoder = CovariateEncoder::fit(&panel.households);
    let mut keep = vec![false; panel.n_households()];
    for &h in &sample.members {
        keep[h] = encoder.encode(&panel.households[h], set)?.is_some();
    }
    Ok(sample.filter(|h| keep[h]))
}

fn histogram(values: impl Iterator<Item = f64>) -> [usize; HISTOGRAM_BINS] {
    let mut bins = [0; HISTOGRAM_BINS];
    for v in values {
        let b = ((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        bins[b] += 1;
    }
    bins
}

/// Logistic propensity of treated-arm membership on the encoded covariates,
/// fitted once on the sample.
pub fn fit_nuisance(
    panel: &PreparedPanel,
    sample: &Sample,
    propensity_set: &[Covariate],
    outcome_set: &[Covariate],
) -> Result<NuisanceFit> {
    let (n1, n0) = (sample.n_treated(), sample.n_control());
    if n1 < 2 || n0 < 2 {
        return Err(Error::insufficient(format!("propensity model needs two households per arm ({n1} treated, {n0} comparison)")));
    }
    let encoder = CovariateEncoder::fit(&panel.households);
    let profiles: Vec<_> = sample.members.iter().map(|&h| &panel.households[h]).collect();
    let full = encoder.design(&profiles, propensity_set)?;
    let outcome_design = encoder.design(&profiles, outcome_set)?;
    let propensity = match logistic_irls(&full, &sample.treated) {
        Ok(fit) => fit,
        Err(Error::DegenerateLabels) => return Err(Error::insufficient("propensity labels are all identical")),
        Err(e) => return Err(e),
    };
    if propensity.separation_flag {
        log::warn!("propensity model shows (quasi-)separation; continuing with clamped probabilities");
    }
    let design = full.select_columns(&propensity.kept_columns);

    let p = &propensity.fitted_probabilities;
    let (lo, hi) = PROPENSITY_CLAMP;
    let clamped: Vec<f64> = p.iter().map(|v| v.clamp(lo, hi)).collect();
    let offending: Vec<String> = sample
        .members
        .iter()
        .zip(&sample.treated)
        .zip(p)
        .filter(|((_, &t), &v)| !t && !(lo..=hi).contains(&v))
        .map(|((&h, _), _)| panel.households[h].household_id.clone())
        .collect();
    if offending.len() as f64 > MAX_CLAMPED_SHARE * n0 as f64 {
        return Err(Error::OverlapViolation { households: offending });
    }

    let arm = |t: bool| p.iter().zip(&sample.treated).filter(move |(_, &d)| d == t).map(|(&v, _)| v);
    let overlap = OverlapReport {
        min_treated: arm(true).fold(f64::INFINITY, f64::min),
        max_treated: arm(true).fold(f64::NEG_INFINITY, f64::max),
        min_control: arm(false).fold(f64::INFINITY, f64::min),
        max_control: arm(false).fold(f64::NEG_INFINITY, f64::max),
        histogram_treated: histogram(arm(true)),
        histogram_control: histogram(arm(false)),
        clamped_controls: offending.len(),
        separation: propensity.separation_flag,
    };

    let k = design.cols();
    let mut hessian = DMatrix::zeros(k, k);
    for (i, &pi) in p.iter().enumerate() {
        let x = design.row(i);
        let w = pi * (1.0 - pi);
        for a in 0..k {
            for b in 0..=a {
                hessian[(a, b)] += w * x[a] * x[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            hessian[(b, a)] = hessian[(a, b)];
        }
    }
    let hessian_inverse = match hessian.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => pseudo_inverse_sym(&hessian).0,
    };

    Ok(NuisanceFit {
        members: sample.members.clone(),
        treated: sample.treated.clone(),
        design,
        outcome_design,
        propensity,
        clamped,
        overlap,
        outcome_models: Vec::new(),
        hessian_inverse,
    })
}
