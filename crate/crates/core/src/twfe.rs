//! Two-way fixed effects baseline.
//!
//! The outcome is regressed on household and quarter effects plus a
//! treated-arm × window indicator. On a balanced panel both sets of effects
//! are removed by double demeaning, which gives the dummy-regression
//! coefficient exactly. Standard errors are clustered by household.

use crate::drdid::{pct_change, treated_pretax_mean, Sample};
use crate::error::{Error, Result};
use crate::numerics::two_sided_p;
use crate::panel::{Outcome, PreparedPanel};
use crate::quarter::{Quarter, Window};

#[derive(Clone, Debug, PartialEq)]
pub struct TwfeResult {
    pub window: String,
    pub estimate: f64,
    pub se: f64,
    pub p_value: f64,
    pub pct_change: Option<f64>,
    pub n_obs: usize,
    pub n_households: usize,
}

/// Quarters entering the regression: non-excluded pre-tax quarters and the
/// window.
pub fn twfe_quarters(panel: &PreparedPanel, window: &Window, excluded: &[Quarter]) -> Vec<Quarter> {
    panel
        .quarters
        .iter()
        .copied()
        .filter(|q| (q.is_pre_tax() && !excluded.contains(q)) || window.quarters.contains(q))
        .collect()
}

/// Within estimator on the households observed in every used quarter.
pub fn twfe_estimate(
    panel: &PreparedPanel,
    outcome: Outcome,
    window: &Window,
    excluded: &[Quarter],
    sample: &Sample,
) -> Result<TwfeResult> {
    let quarters = twfe_quarters(panel, window, excluded);
    let qis: Vec<usize> = quarters.iter().filter_map(|&q| panel.quarter_index(q)).collect();
    let t = qis.len();
    if t < 2 {
        return Err(Error::insufficient("two-way fixed effects need at least two quarters"));
    }
    // Balanced complete-case subsample.
    let mut ys: Vec<Vec<f64>> = Vec::new();
    let mut treated: Vec<bool> = Vec::new();
    for (&h, &d) in sample.members.iter().zip(&sample.treated) {
        let row: Option<Vec<f64>> = qis.iter().map(|&qi| panel.value(outcome, h, qi)).collect();
        if let Some(row) = row {
            ys.push(row);
            treated.push(d);
        }
    }
    let g = ys.len();
    let exposed: Vec<bool> = quarters.iter().map(|q| window.quarters.contains(q)).collect();
    if !treated.iter().any(|&d| d) || !exposed.iter().any(|&e| e) {
        return Err(Error::insufficient(format!("no treated cells for window {}", window.name)));
    }
    if treated.iter().all(|&d| d) {
        return Err(Error::insufficient("no comparison households in the balanced subsample"));
    }
    let x = |i: usize, s: usize| if treated[i] && exposed[s] { 1.0 } else { 0.0 };

    let demean = |v: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<f64>> {
        let row_mean: Vec<f64> = (0..g).map(|i| (0..t).map(|s| v(i, s)).sum::<f64>() / t as f64).collect();
        let col_mean: Vec<f64> = (0..t).map(|s| (0..g).map(|i| v(i, s)).sum::<f64>() / g as f64).collect();
        let grand = row_mean.iter().sum::<f64>() / g as f64;
        (0..g).map(|i| (0..t).map(|s| v(i, s) - row_mean[i] - col_mean[s] + grand).collect()).collect()
    };
    let yd = demean(&|i, s| ys[i][s]);
    let xd = demean(&x);

    let sxx: f64 = xd.iter().flatten().map(|v| v * v).sum();
    let sxy: f64 = xd.iter().flatten().zip(yd.iter().flatten()).map(|(a, b)| a * b).sum();
    let beta = sxy / sxx;
    let mut meat = 0.0;
    for i in 0..g {
        let score: f64 = (0..t).map(|s| xd[i][s] * (yd[i][s] - beta * xd[i][s])).sum();
        meat += score * score;
    }
    let se = if g > 1 { (meat * g as f64 / (g - 1) as f64).sqrt() / sxx } else { 0.0 };
    let p_value = if se > 0.0 { two_sided_p(beta / se) } else if beta == 0.0 { 1.0 } else { 0.0 };
    let baseline = treated_pretax_mean(panel, outcome, sample);
    Ok(TwfeResult {
        window: window.name.clone(),
        estimate: beta,
        se,
        p_value,
        pct_change: baseline.and_then(|b| pct_change(beta, b).ok()),
        n_obs: g * t,
        n_households: g,
    })
}
