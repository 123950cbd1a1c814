use rayon::prelude::*;

use super::att::{att_q_dr, att_q_unconditional, AttEstimate};
use super::inference::{aggregate, att_point, pct_change, simultaneous_bands, wald_pretrend, AttPoint, InfluenceMatrix, WaldTest, WindowEstimate};
use super::nuisance::{complete_covariates, fit_nuisance, NuisanceFit, OverlapReport};
use super::sample::{IncomeGroup, Sample};
use super::spec::EstimationSpec;
use crate::error::{Error, Result};
use crate::panel::{Outcome, PreparedPanel};
use crate::quarter::Quarter;

#[derive(Clone, Debug)]
pub struct EventStudyResult {
    pub spec: EstimationSpec,
    pub points: Vec<AttPoint>,
    pub windows: Vec<WindowEstimate>,
    pub pretrend: Option<WaldTest>,
    /// Retained for bootstrap and subgroup reuse.
    pub influence: InfluenceMatrix,
    pub overlap: Option<OverlapReport>,
    /// Treated-arm pre-tax mean of the unadjusted outcome.
    pub baseline: Option<f64>,
    pub critical_value: Option<f64>,
    pub n_treated: usize,
    pub n_control: usize,
}

impl EventStudyResult {
    pub fn pretrend_p(&self) -> Option<f64> {
        self.pretrend.map(|w| w.p_value)
    }

    pub fn point(&self, q: Quarter) -> Option<&AttPoint> {
        self.points.iter().find(|p| p.quarter == q)
    }

    pub fn window(&self, name: &str) -> Option<&WindowEstimate> {
        self.windows.iter().find(|w| w.name == name)
    }
}

/// Treated-arm mean of the reweighted, unadjusted outcome over pre-tax
/// cells that are not masked.
pub fn treated_pretax_mean(panel: &PreparedPanel, outcome: Outcome, sample: &Sample) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for (&h, _) in sample.members.iter().zip(&sample.treated).filter(|(_, &t)| t) {
        for (qi, q) in panel.quarters.iter().enumerate() {
            if q.is_pre_tax() {
                if let Some(v) = panel.level(outcome, h, qi) {
                    sum += v;
                    n += 1;
                }
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Fit first stages (if conditional) and estimate every requested quarter.
fn estimate_quarters(
    panel: &PreparedPanel,
    spec: &EstimationSpec,
    sample: &Sample,
    quarters: &[Quarter],
) -> Result<(Vec<AttEstimate>, Option<NuisanceFit>, Sample)> {
    if panel.quarter_index(spec.reference).is_none() {
        return Err(Error::InvalidConfig(format!("reference quarter {} is outside the panel grid", spec.reference)));
    }
    if spec.conditional {
        let complete = complete_covariates(panel, sample, &spec.required_covariates())?;
        let dropped = sample.members.len() - complete.members.len();
        if dropped > 0 {
            log::info!("{dropped} households without complete covariates left out of conditional estimation");
        }
        let mut nuisance = fit_nuisance(panel, &complete, spec.propensity_set(), spec.outcome_set())?;
        let fits: Vec<_> = quarters
            .par_iter()
            .map(|&q| att_q_dr(panel, &nuisance, spec.outcome, q, spec.reference))
            .collect::<Result<_>>()?;
        let mut estimates = Vec::with_capacity(fits.len());
        for (est, model) in fits {
            nuisance.outcome_models.push((est.quarter, model));
            estimates.push(est);
        }
        Ok((estimates, Some(nuisance), complete))
    } else {
        let estimates = quarters
            .par_iter()
            .map(|&q| att_q_unconditional(panel, sample, spec.outcome, q, spec.reference))
            .collect::<Result<_>>()?;
        Ok((estimates, None, sample.clone()))
    }
}

/// Full event study on a given sample: points, bands, window aggregates,
/// percent changes and the pre-trend test.
pub fn estimate_on(panel: &PreparedPanel, spec: &EstimationSpec, sample: &Sample) -> Result<EventStudyResult> {
    spec.validate()?;
    if spec.product != panel.product {
        return Err(Error::invalid(format!("spec is for {}, panel holds {}", spec.product, panel.product)));
    }
    let quarters = spec.point_quarters(&panel.quarters);
    let (estimates, nuisance, used) = estimate_quarters(panel, spec, sample, &quarters)?;
    let mut points: Vec<AttPoint> = estimates
        .iter()
        .map(|e| att_point(e.quarter, e.estimate, e.se(), spec.level, e.n_treated, e.n_control))
        .collect();
    let influence = InfluenceMatrix {
        quarters: estimates.iter().map(|e| e.quarter).collect(),
        columns: estimates.into_iter().map(|e| e.influence).collect(),
    };
    let critical_value = simultaneous_bands(&mut points, &influence, spec.bootstrap_reps, spec.level, spec.seed)?;

    let baseline = treated_pretax_mean(panel, spec.outcome, &used);
    let mut windows = Vec::with_capacity(spec.windows.len());
    for w in &spec.windows {
        let mut est = aggregate(&points, &influence, w)?;
        est.pct_change = match baseline.map(|b| pct_change(est.estimate, b)) {
            Some(Ok(v)) => Some(v),
            Some(Err(_)) | None => {
                log::warn!("percent change undefined for window {} (zero or missing baseline)", w.name);
                None
            }
        };
        windows.push(est);
    }
    let pretrend = match wald_pretrend(&points, &influence) {
        Ok(w) => Some(w),
        Err(Error::InsufficientData(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(EventStudyResult {
        spec: spec.clone(),
        points,
        windows,
        pretrend,
        influence,
        overlap: nuisance.map(|n| n.overlap),
        baseline,
        critical_value,
        n_treated: used.n_treated(),
        n_control: used.n_control(),
    })
}

/// Danish against German households.
pub fn event_study(panel: &PreparedPanel, spec: &EstimationSpec) -> Result<EventStudyResult> {
    estimate_on(panel, spec, &Sample::countries(panel))
}

/// The two quarters before the tax against 2011Q1, estimated like the main
/// points but never pooled into windows.
pub fn anticipation_check(panel: &PreparedPanel, spec: &EstimationSpec, sample: &Sample) -> Result<Vec<AttPoint>> {
    let mut shifted = spec.clone();
    shifted.reference = Quarter::new(2011, 1)?;
    shifted.excluded.clear();
    let quarters = [Quarter::new(2011, 2)?, Quarter::new(2011, 3)?];
    for q in quarters {
        if panel.quarter_index(q).is_none() {
            return Err(Error::invalid(format!("anticipation quarter {q} is outside the panel grid")));
        }
    }
    let (estimates, _, _) = estimate_quarters(panel, &shifted, sample, &quarters)?;
    Ok(estimates
        .iter()
        .map(|e| att_point(e.quarter, e.estimate, e.se(), spec.level, e.n_treated, e.n_control))
        .collect())
}

/// Re-run the whole estimation within each income group. Groups lacking an
/// arm are skipped with a warning.
pub fn subgroup_estimate(panel: &PreparedPanel, spec: &EstimationSpec, sample: &Sample) -> Vec<(IncomeGroup, EventStudyResult)> {
    IncomeGroup::ALL
        .iter()
        .filter_map(|&g| {
            let sub = sample.income_group(panel, g);
            match estimate_on(panel, spec, &sub) {
                Ok(r) => Some((g, r)),
                Err(e) => {
                    log::warn!("income group {} skipped: {e}", g.as_str());
                    None
                }
            }
        })
        .collect()
}
