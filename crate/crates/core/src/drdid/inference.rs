use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use super::att::se_from_influence;
use crate::error::{Error, Result};
use crate::numerics::{chi_square_sf, derive_seed, normal_quantile, pseudo_inverse_sym, quantile, two_sided_p, RngStream};
use crate::quarter::{Quarter, Window};

/// One event-study coefficient with pointwise and simultaneous intervals.
#[derive(Clone, Debug, PartialEq)]
pub struct AttPoint {
    pub quarter: Quarter,
    pub estimate: f64,
    pub se: f64,
    pub p_value: f64,
    pub pointwise_ci: (f64, f64),
    pub simultaneous_ci: (f64, f64),
    pub n_treated: usize,
    pub n_control: usize,
}

/// Sum-scaled influence functions, one column per event-study point and one
/// row per panel household.
#[derive(Clone, Debug, PartialEq)]
pub struct InfluenceMatrix {
    pub quarters: Vec<Quarter>,
    pub columns: Vec<Vec<f64>>,
}

impl InfluenceMatrix {
    pub fn column(&self, q: Quarter) -> Option<&[f64]> {
        self.quarters.iter().position(|&x| x == q).map(|j| self.columns[j].as_slice())
    }

    /// Households contributing to any column.
    fn active_rows(&self) -> Vec<usize> {
        let n = self.columns.first().map_or(0, Vec::len);
        (0..n).filter(|&i| self.columns.iter().any(|c| c[i] != 0.0)).collect()
    }
}

/// Estimate of a window average.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowEstimate {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub p_value: f64,
    pub pct_change: Option<f64>,
    pub n_treated: usize,
    pub n_control: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaldTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

pub(crate) fn z_value(level: f64) -> f64 {
    normal_quantile(0.5 + level / 2.0)
}

/// Pointwise normal interval and two-sided p-value around an estimate.
pub fn att_point(quarter: Quarter, estimate: f64, se: f64, level: f64, n_treated: usize, n_control: usize) -> AttPoint {
    let z = z_value(level);
    let p_value = if se > 0.0 { two_sided_p(estimate / se) } else if estimate == 0.0 { 1.0 } else { 0.0 };
    let ci = (estimate - z * se, estimate + z * se);
    AttPoint { quarter, estimate, se, p_value, pointwise_ci: ci, simultaneous_ci: ci, n_treated, n_control }
}

/// Unweighted mean of the window's points. The influence function of the
/// mean is the mean of the per-quarter influence functions, so correlation
/// across quarters within a household is kept.
pub fn aggregate(points: &[AttPoint], influence: &InfluenceMatrix, window: &Window) -> Result<WindowEstimate> {
    let mut est = 0.0;
    let mut phi: Vec<f64> = Vec::new();
    let (mut n1, mut n0) = (0, 0);
    for &q in &window.quarters {
        let point = points
            .iter()
            .find(|p| p.quarter == q)
            .ok_or_else(|| Error::MissingQuarter { window: window.name.clone(), quarter: q })?;
        let col = influence
            .column(q)
            .ok_or_else(|| Error::MissingQuarter { window: window.name.clone(), quarter: q })?;
        if phi.is_empty() {
            phi = vec![0.0; col.len()];
        }
        phi.iter_mut().zip(col).for_each(|(a, b)| *a += b);
        est += point.estimate;
        n1 = n1.max(point.n_treated);
        n0 = n0.max(point.n_control);
    }
    let k = window.quarters.len() as f64;
    est /= k;
    phi.iter_mut().for_each(|v| *v /= k);
    let se = se_from_influence(&phi);
    let p_value = if se > 0.0 { two_sided_p(est / se) } else if est == 0.0 { 1.0 } else { 0.0 };
    Ok(WindowEstimate {
        name: window.name.clone(),
        estimate: est,
        se,
        p_value,
        pct_change: None,
        n_treated: n1,
        n_control: n0,
    })
}

/// `100 · estimate / baseline`.
pub fn pct_change(estimate: f64, baseline: f64) -> Result<f64> {
    if baseline == 0.0 || !baseline.is_finite() {
        return Err(Error::UndefinedPercent);
    }
    Ok(100.0 * estimate / baseline)
}

/// Multiplier-bootstrap simultaneous bands.
///
/// Each replication draws one Rademacher weight per household and perturbs
/// every point by the weighted sum of its influence contributions. Scales are
/// interquartile ranges of the perturbations over the normal IQR; the
/// critical value is the `level` quantile of the largest scaled deviation.
/// A half-width is never narrower than the pointwise one, and a quarter with
/// zero bootstrap scale falls back to its analytic standard error.
pub fn simultaneous_bands(points: &mut [AttPoint], influence: &InfluenceMatrix, reps: usize, level: f64, seed: u64) -> Result<Option<f64>> {
    if points.len() != influence.columns.len() {
        return Err(Error::invalid("points and influence columns differ in number"));
    }
    let z = z_value(level);
    for p in points.iter_mut() {
        p.simultaneous_ci = p.pointwise_ci;
    }
    if reps == 0 || points.is_empty() {
        return Ok(None);
    }
    if reps < 100 {
        log::warn!("only {reps} bootstrap replications; simultaneous bands will be noisy");
    }
    let rows = influence.active_rows();
    let nq = points.len();
    let n_factor = if rows.len() > 1 { (rows.len() as f64 / (rows.len() - 1) as f64).sqrt() } else { 1.0 };
    // Row-major copy of the active part for cache-friendly replications.
    let phi: Vec<f64> = rows.iter().flat_map(|&i| influence.columns.iter().map(move |c| c[i] * n_factor)).collect();
    let base = derive_seed(seed, "multiplier-bootstrap");
    let draws: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|b| {
            let mut rng = RngStream::new(base, b as u64).rng();
            let mut delta = vec![0.0; nq];
            for r in 0..rows.len() {
                let w = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let row = &phi[r * nq..(r + 1) * nq];
                delta.iter_mut().zip(row).for_each(|(d, v)| *d += w * v);
            }
            delta
        })
        .collect();

    let normal_iqr = normal_quantile(0.75) - normal_quantile(0.25);
    let mut scale = vec![0.0; nq];
    for (j, s) in scale.iter_mut().enumerate() {
        let col: Vec<f64> = draws.iter().map(|d| d[j]).collect();
        let iqr = quantile(&col, 0.75)? - quantile(&col, 0.25)?;
        *s = if iqr > 0.0 { iqr / normal_iqr } else { points[j].se };
    }
    let t: Vec<f64> = draws
        .iter()
        .map(|d| {
            d.iter()
                .zip(&scale)
                .filter(|(_, &s)| s > 0.0)
                .map(|(x, s)| x.abs() / s)
                .fold(0.0, f64::max)
        })
        .collect();
    let crit = quantile(&t, level)?;
    for (p, s) in points.iter_mut().zip(&scale) {
        let half = (crit * s).max(z * p.se);
        p.simultaneous_ci = (p.estimate - half, p.estimate + half);
    }
    Ok(Some(crit))
}

/// Joint Wald test that the given points are zero, using the covariance of
/// their influence functions (pseudo-inverse, rank as degrees of freedom).
pub fn wald_test(points: &[&AttPoint], influence: &InfluenceMatrix) -> Result<WaldTest> {
    if points.is_empty() {
        return Err(Error::insufficient("no points to test"));
    }
    let cols: Vec<&[f64]> = points
        .iter()
        .map(|p| influence.column(p.quarter).ok_or_else(|| Error::invalid(format!("no influence for {}", p.quarter))))
        .collect::<Result<_>>()?;
    let n_rows = cols[0].len();
    let active: Vec<usize> = (0..n_rows).filter(|&i| cols.iter().any(|c| c[i] != 0.0)).collect();
    let k = points.len();
    let factor = if active.len() > 1 { active.len() as f64 / (active.len() - 1) as f64 } else { 1.0 };
    let mut sigma = DMatrix::zeros(k, k);
    for &i in &active {
        for a in 0..k {
            for b in 0..=a {
                sigma[(a, b)] += cols[a][i] * cols[b][i];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            sigma[(b, a)] = sigma[(a, b)];
        }
    }
    sigma *= factor;
    let (inv, rank) = pseudo_inverse_sym(&sigma);
    let theta = DVector::from_iterator(k, points.iter().map(|p| p.estimate));
    if rank == 0 {
        let p_value = if theta.iter().all(|&v| v == 0.0) { 1.0 } else { 0.0 };
        return Ok(WaldTest { statistic: 0.0, dof: 0, p_value });
    }
    let statistic = theta.dot(&(&inv * &theta)).max(0.0);
    Ok(WaldTest { statistic, dof: rank, p_value: chi_square_sf(statistic, rank)? })
}

/// Wald test of parallel pre-trends over the points before the tax start.
pub fn wald_pretrend(points: &[AttPoint], influence: &InfluenceMatrix) -> Result<WaldTest> {
    let pre: Vec<&AttPoint> = points.iter().filter(|p| p.quarter.is_pre_tax()).collect();
    if pre.is_empty() {
        return Err(Error::insufficient("no pre-tax points for the parallel-trends test"));
    }
    wald_test(&pre, influence)
}
