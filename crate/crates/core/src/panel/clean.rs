use super::types::Country;
use crate::error::{Error, Result};
use crate::numerics::quantile;

/// Tukey's fences: flag `v` when `v < Q1 - k IQR` or `v > Q3 + k IQR`.
///
/// With fewer than four values nothing is flagged.
pub fn tukey_outliers(values: &[f64], k: f64) -> Result<Vec<bool>> {
    if !(k > 0.0) {
        return Err(Error::invalid(format!("Tukey constant must be > 0, got {k}")));
    }
    if values.len() < 4 {
        if !values.is_empty() {
            log::warn!("Tukey fences need at least 4 values, got {}; nothing flagged", values.len());
        }
        return Ok(vec![false; values.len()]);
    }
    let q1 = quantile(values, 0.25)?;
    let q3 = quantile(values, 0.75)?;
    let iqr = q3 - q1;
    // Round-off from reweighting must not trip a zero-width fence.
    let slack = 1e-9 * q1.abs().max(q3.abs());
    let (lo, hi) = (q1 - k * iqr - slack, q3 + k * iqr + slack);
    Ok(values.iter().map(|&v| v < lo || v > hi).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetrendResult {
    /// Residuals aligned with the input; `None` where the input was `None`.
    pub residuals: Vec<Option<f64>>,
    /// Per-(country, season) means that were removed.
    pub means: [[f64; 4]; 2],
    pub counts: [[usize; 4]; 2],
}

/// Remove country-specific seasonal means.
///
/// This is the residual of a per-country regression on four quarter-of-year
/// dummies without a separate intercept. Missing values are skipped.
pub fn seasonal_detrend(values: &[Option<f64>], countries: &[Country], seasons: &[usize]) -> Result<DetrendResult> {
    if values.len() != countries.len() || values.len() != seasons.len() {
        return Err(Error::invalid("values, countries and seasons must align"));
    }
    let mut sums = [[0.0f64; 4]; 2];
    let mut counts = [[0usize; 4]; 2];
    for ((v, c), &s) in values.iter().zip(countries).zip(seasons) {
        if let Some(v) = v {
            sums[c.index()][s] += v;
            counts[c.index()][s] += 1;
        }
    }
    for c in [Country::DK, Country::DE] {
        if counts[c.index()].iter().all(|&n| n == 0) && countries.contains(&c) {
            log::warn!("no observations for {c}; seasonal adjustment skipped for that country");
        }
    }
    let mut means = [[0.0f64; 4]; 2];
    for c in 0..2 {
        for s in 0..4 {
            if counts[c][s] > 0 {
                means[c][s] = sums[c][s] / counts[c][s] as f64;
            }
        }
    }
    // Second pass removes the rounding left by the first mean.
    let mut residuals: Vec<Option<f64>> = values
        .iter()
        .zip(countries)
        .zip(seasons)
        .map(|((v, c), &s)| v.map(|v| v - means[c.index()][s]))
        .collect();
    let mut drift = [[0.0f64; 4]; 2];
    for ((r, c), &s) in residuals.iter().zip(countries).zip(seasons) {
        if let Some(r) = r {
            drift[c.index()][s] += r;
        }
    }
    for c in 0..2 {
        for s in 0..4 {
            if counts[c][s] > 0 {
                drift[c][s] /= counts[c][s] as f64;
                means[c][s] += drift[c][s];
            }
        }
    }
    for ((r, c), &s) in residuals.iter_mut().zip(countries).zip(seasons) {
        if let Some(r) = r {
            *r -= drift[c.index()][s];
        }
    }
    Ok(DetrendResult { residuals, means, counts })
}
