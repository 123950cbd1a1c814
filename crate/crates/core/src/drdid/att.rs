use nalgebra::{DMatrix, DVector};

use super::nuisance::NuisanceFit;
use super::sample::Sample;
use crate::error::{Error, Result};
use crate::numerics::{independent_columns, pseudo_inverse_sym, LinearFit};
use crate::panel::{Outcome, PreparedPanel};
use crate::quarter::Quarter;

/// ATT for one quarter against the reference, with its influence function.
///
/// `influence` has one entry per panel household and is scaled so that
/// `estimate - truth ≈ Σ influence`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttEstimate {
    pub quarter: Quarter,
    pub reference: Quarter,
    pub estimate: f64,
    pub influence: Vec<f64>,
    pub n_treated: usize,
    pub n_control: usize,
}

impl AttEstimate {
    pub fn se(&self) -> f64 {
        se_from_influence(&self.influence)
    }
}

/// Standard error from sum-scaled influence contributions, with the
/// `n / (n - 1)` small-sample factor over households that contribute.
pub fn se_from_influence(phi: &[f64]) -> f64 {
    let n = phi.iter().filter(|v| **v != 0.0).count();
    if n < 2 {
        return 0.0;
    }
    let ss: f64 = phi.iter().map(|v| v * v).sum();
    (ss * n as f64 / (n - 1) as f64).sqrt()
}

fn quarter_indices(panel: &PreparedPanel, q: Quarter, reference: Quarter) -> Result<(usize, usize)> {
    if q == reference {
        return Err(Error::invalid(format!("quarter {q} equals the reference")));
    }
    let find = |x: Quarter| {
        panel
            .quarter_index(x)
            .ok_or_else(|| Error::invalid(format!("quarter {x} is outside the panel grid")))
    };
    Ok((find(q)?, find(reference)?))
}

/// Outcome change of each household between the two quarters, where both
/// cells are usable.
fn changes(panel: &PreparedPanel, members: &[usize], outcome: Outcome, qi: usize, ri: usize) -> Vec<Option<f64>> {
    members
        .iter()
        .map(|&h| match (panel.value(outcome, h, qi), panel.value(outcome, h, ri)) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        })
        .collect()
}

fn check_arms(n1: usize, n0: usize, q: Quarter) -> Result<()> {
    if n1 < 2 || n0 < 2 {
        return Err(Error::insufficient(format!(
            "quarter {q}: need at least two households per arm, have {n1} treated and {n0} comparison"
        )));
    }
    Ok(())
}

/// Contribution of the estimated country-season means to the influence
/// function.
///
/// Outcomes are seasonally adjusted with per-country means of every
/// household's cells. When the two arms come from different countries the
/// estimate is shifted by the difference of those means between `q` and the
/// reference, and every panel household of either country carries part of
/// that sampling error.
fn add_seasonal_influence(
    panel: &PreparedPanel,
    sample: &Sample,
    outcome: Outcome,
    q: Quarter,
    reference: Quarter,
    influence: &mut [f64],
) {
    if !panel.detrended || q.season() == reference.season() {
        return;
    }
    let (Some(treated), Some(control)) = (sample.arm_country(panel, true), sample.arm_country(panel, false)) else {
        return;
    };
    if treated == control {
        return;
    }
    let counts = panel.detrend_counts(outcome);
    let (sq, sr) = (q.season(), reference.season());
    for (h, phi) in influence.iter_mut().enumerate() {
        let country = panel.households[h].country;
        let sign = if country == treated {
            -1.0
        } else if country == control {
            1.0
        } else {
            continue;
        };
        let mut g = [0.0; 4];
        for qi in 0..panel.n_quarters() {
            if let Some(v) = panel.adjusted_entry(outcome, h, qi) {
                g[panel.quarters[qi].season()] += v;
            }
        }
        let c = &counts[country.index()];
        let part = |s: usize| if c[s] > 0 { g[s] / c[s] as f64 } else { 0.0 };
        *phi += sign * (part(sq) - part(sr));
    }
}

/// Difference of mean outcome changes between the arms.
pub fn att_q_unconditional(
    panel: &PreparedPanel,
    sample: &Sample,
    outcome: Outcome,
    q: Quarter,
    reference: Quarter,
) -> Result<AttEstimate> {
    let (qi, ri) = quarter_indices(panel, q, reference)?;
    let dy = changes(panel, &sample.members, outcome, qi, ri);
    let (mut s1, mut s0, mut n1, mut n0) = (0.0, 0.0, 0usize, 0usize);
    for (d, &t) in dy.iter().zip(&sample.treated) {
        if let Some(d) = d {
            if t {
                s1 += d;
                n1 += 1;
            } else {
                s0 += d;
                n0 += 1;
            }
        }
    }
    check_arms(n1, n0, q)?;
    let (m1, m0) = (s1 / n1 as f64, s0 / n0 as f64);
    let mut influence = vec![0.0; panel.n_households()];
    for ((&h, d), &t) in sample.members.iter().zip(&dy).zip(&sample.treated) {
        if let Some(d) = d {
            influence[h] = if t { (d - m1) / n1 as f64 } else { -(d - m0) / n0 as f64 };
        }
    }
    add_seasonal_influence(panel, sample, outcome, q, reference, &mut influence);
    Ok(AttEstimate { quarter: q, reference, estimate: m1 - m0, influence, n_treated: n1, n_control: n0 })
}

fn solve_sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    match a.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => pseudo_inverse_sym(a).0,
    }
}

/// Doubly robust ATT(q): inverse-propensity-weighted comparison of outcome
/// changes net of a linear outcome model fitted on comparison households.
///
/// The influence function carries the sampling error of both nuisance fits.
/// Also returns the outcome regression over all encoded outcome columns
/// (zero for columns not identified among comparison households).
pub fn att_q_dr(
    panel: &PreparedPanel,
    nuisance: &NuisanceFit,
    outcome: Outcome,
    q: Quarter,
    reference: Quarter,
) -> Result<(AttEstimate, LinearFit)> {
    let (qi, ri) = quarter_indices(panel, q, reference)?;
    let members = &nuisance.members;
    let dy = changes(panel, members, outcome, qi, ri);
    let in_pair: Vec<usize> = (0..members.len()).filter(|&i| dy[i].is_some()).collect();
    let n1 = in_pair.iter().filter(|&&i| nuisance.treated[i]).count();
    let n0 = in_pair.len() - n1;
    check_arms(n1, n0, q)?;

    let design = &nuisance.design;
    let od = &nuisance.outcome_design;
    let controls: Vec<usize> = in_pair.iter().copied().filter(|&i| !nuisance.treated[i]).collect();
    let cols = independent_columns(&od.select_rows(&controls));
    let k = cols.len();
    let xo = |i: usize| -> DVector<f64> { DVector::from_iterator(k, cols.iter().map(|&c| od.get(i, c))) };

    let mut a = DMatrix::zeros(k, k);
    let mut xty = DVector::zeros(k);
    for &i in &controls {
        let x = xo(i);
        a += &x * x.transpose();
        xty += &x * dy[i].expect("pair member");
    }
    let a_inv = solve_sym(&a);
    let beta = &a_inv * &xty;

    let mut resid = vec![0.0; members.len()];
    let (mut s1, mut s0) = (0.0, 0.0);
    for &i in &in_pair {
        resid[i] = dy[i].expect("pair member") - xo(i).dot(&beta);
        if nuisance.treated[i] {
            s1 += 1.0;
        } else {
            let p = nuisance.clamped[i];
            s0 += p / (1.0 - p);
        }
    }
    let w0 = |i: usize| {
        let p = nuisance.clamped[i];
        if nuisance.treated[i] {
            0.0
        } else {
            p / (1.0 - p)
        }
    };
    let w1 = |i: usize| if nuisance.treated[i] { 1.0 } else { 0.0 };
    let eta_t: f64 = in_pair.iter().map(|&i| w1(i) * resid[i]).sum::<f64>() / s1;
    let eta_c: f64 = in_pair.iter().map(|&i| w0(i) * resid[i]).sum::<f64>() / s0;

    let mut phi_members = vec![0.0; members.len()];
    let kp = design.cols();
    let mut m1 = DVector::zeros(k);
    let mut m3 = DVector::zeros(k);
    let mut m2 = DVector::zeros(kp);
    for &i in &in_pair {
        phi_members[i] = w1(i) * (resid[i] - eta_t) / s1 - w0(i) * (resid[i] - eta_c) / s0;
        let x = xo(i);
        m1 += &x * (w1(i) / s1);
        m3 += &x * (w0(i) / s0);
        if !nuisance.treated[i] {
            let xp = DVector::from_row_slice(design.row(i));
            m2 += xp * (w0(i) * (resid[i] - eta_c) / s0);
        }
    }
    // Outcome-regression estimation error.
    let v = &a_inv * (&m3 - &m1);
    for &i in &controls {
        phi_members[i] += xo(i).dot(&v) * resid[i];
    }
    // Propensity estimation error.
    let u = &nuisance.hessian_inverse * &m2;
    let p = &nuisance.propensity.fitted_probabilities;
    for i in 0..members.len() {
        let d = if nuisance.treated[i] { 1.0 } else { 0.0 };
        let xp = DVector::from_row_slice(design.row(i));
        phi_members[i] -= xp.dot(&u) * (d - p[i]);
    }

    let mut influence = vec![0.0; panel.n_households()];
    for (i, &h) in members.iter().enumerate() {
        influence[h] = phi_members[i];
    }
    let sample = Sample { members: members.clone(), treated: nuisance.treated.clone() };
    add_seasonal_influence(panel, &sample, outcome, q, reference, &mut influence);

    let mut coefficients = vec![0.0; od.cols()];
    for (j, &c) in cols.iter().enumerate() {
        coefficients[c] = beta[j];
    }
    let fit = LinearFit {
        coefficients,
        residuals: controls.iter().map(|&i| resid[i]).collect(),
        rank: k,
        converged: true,
    };
    Ok((AttEstimate { quarter: q, reference, estimate: eta_t - eta_c, influence, n_treated: n1, n_control: n0 }, fit))
}
