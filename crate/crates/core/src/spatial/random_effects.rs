use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{independent_columns, ols, pseudo_inverse_sym, DesignMatrix};
use crate::panel::{write_csv_atomic, Country, Covariate, CovariateEncoder, PreparedPanel};
use crate::quarter::Quarter;
use crate::simulate::crossover;

/// Labels of the distance and tax terms, in design order after the intercept.
pub const RE_TERMS: [&str; 6] = ["intercept", "dist", "dist2", "tax", "dist_x_tax", "dist2_x_tax"];

#[derive(Clone, Debug, PartialEq)]
pub struct ReOptions {
    /// Quarters after this one are left out (default: last tax quarter).
    pub last_quarter: Quarter,
    pub covariates: Vec<Covariate>,
    /// Force the quasi-demeaning weight instead of estimating it.
    pub theta: Option<f64>,
}

impl Default for ReOptions {
    fn default() -> Self {
        ReOptions { last_quarter: Quarter::TAX_END, covariates: Covariate::ALL.to_vec(), theta: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReCoefficient {
    pub label: String,
    /// `None` when the column is not identified (dropped as collinear).
    pub estimate: Option<f64>,
    /// Household-clustered standard error.
    pub se: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReModelFit {
    pub coefficients: Vec<ReCoefficient>,
    pub sigma2_alpha: f64,
    pub sigma2_eps: f64,
    /// The estimated between variance was negative and set to 0.
    pub clamped: bool,
    pub n_households: usize,
    pub n_obs: usize,
    /// `(distance, no tax, tax)` on a 1 km grid, covariates at their means.
    pub curve: Vec<(f64, f64, f64)>,
    /// Smallest positive distance where the tax and no-tax curves cross.
    pub crossover_km: Option<f64>,
}

impl ReModelFit {
    pub fn coefficient(&self, label: &str) -> Option<f64> {
        self.coefficients.iter().find(|c| c.label == label).and_then(|c| c.estimate)
    }

    fn term(&self, i: usize) -> f64 {
        self.coefficient(RE_TERMS[i]).unwrap_or(0.0)
    }
}

/// Household blocks of the RE design.
struct Blocks {
    rows: Vec<Vec<f64>>,
    y: Vec<f64>,
    /// Row ranges per household.
    spans: Vec<(usize, usize)>,
    labels: Vec<String>,
}

fn collect(panel: &PreparedPanel, options: &ReOptions) -> Result<Blocks> {
    let danes: Vec<usize> = (0..panel.n_households()).filter(|&h| panel.households[h].country == Country::DK).collect();
    let encoder = CovariateEncoder::fit(danes.iter().map(|&h| &panel.households[h]));
    let mut labels: Vec<String> = RE_TERMS.iter().map(|s| s.to_string()).collect();
    labels.extend(encoder.labels(&options.covariates).into_iter().skip(1));
    let (mut rows, mut y, mut spans) = (Vec::new(), Vec::new(), Vec::new());
    let mut skipped = 0;
    for &h in &danes {
        let p = &panel.households[h];
        let (Some(d), Some(x)) = (p.distance_km, encoder.encode(p, &options.covariates)?) else {
            skipped += 1;
            continue;
        };
        let start = rows.len();
        for (qi, q) in panel.quarters.iter().enumerate() {
            if *q > options.last_quarter {
                continue;
            }
            let Some(share) = panel.cell(h, qi).share_abroad else { continue };
            let tax = f64::from(u8::from(q.is_tax()));
            let mut row = vec![1.0, d, d * d, tax, d * tax, d * d * tax];
            row.extend_from_slice(&x[1..]);
            rows.push(row);
            y.push(share);
        }
        if rows.len() > start {
            spans.push((start, rows.len()));
        }
    }
    if skipped > 0 {
        log::info!("random-effects model: {skipped} Danish households lack a distance or covariates");
    }
    Ok(Blocks { rows, y, spans, labels })
}

fn design(rows: &[Vec<f64>], labels: &[String]) -> Result<DesignMatrix> {
    let values = rows.iter().flatten().copied().collect();
    DesignMatrix::new(rows.len(), labels.len(), values, labels.to_vec())
}

/// `x - m`, with differences at rounding level set to exactly zero so that
/// time-invariant columns drop out under full demeaning.
fn quasi_demean(x: f64, m: f64) -> f64 {
    let d = x - m;
    if d.abs() <= 1e-12 * x.abs().max(m.abs()) {
        0.0
    } else {
        d
    }
}

fn means(rows: &[Vec<f64>], y: &[f64], (a, b): (usize, usize)) -> (Vec<f64>, f64) {
    let t = (b - a) as f64;
    let k = rows[a].len();
    let xm = (0..k).map(|j| rows[a..b].iter().map(|r| r[j]).sum::<f64>() / t).collect();
    (xm, y[a..b].iter().sum::<f64>() / t)
}

/// Random-intercept model of the Danish share bought abroad on distance,
/// distance squared, the tax dummy, their interactions and covariates.
///
/// Variance components follow Swamy and Arora: `σ²_ε` from the within
/// regression, `σ²_α = σ²_between - σ²_ε · mean(1 / T_i)` from the between
/// regression on household means. Each household is then quasi-demeaned with
/// `θ_i = 1 - sqrt(σ²_ε / (T_i σ²_α + σ²_ε))` and the transformed data are fit
/// by OLS. Distances are in km (squared terms in km²).
pub fn random_effects_distance(panel: &PreparedPanel, options: &ReOptions) -> Result<ReModelFit> {
    let Blocks { rows, y, spans, labels } = collect(panel, options)?;
    let (n, g) = (rows.len(), spans.len());
    let k = labels.len();
    if g < 2 || n <= g + 1 {
        return Err(Error::insufficient(format!("random-effects model needs more data ({g} households, {n} observations)")));
    }
    let block_means: Vec<(Vec<f64>, f64)> = spans.iter().map(|&s| means(&rows, &y, s)).collect();

    // Within regression on time-varying columns.
    let mut w_rows = Vec::with_capacity(n);
    let mut w_y = Vec::with_capacity(n);
    for (&(a, b), (xm, ym)) in spans.iter().zip(&block_means) {
        for i in a..b {
            w_rows.push(rows[i].iter().zip(xm).map(|(x, m)| x - m).collect::<Vec<_>>());
            w_y.push(y[i] - ym);
        }
    }
    let within = ols(&design(&w_rows, &labels)?, &w_y)?;
    let dof_w = n as f64 - g as f64 - within.rank as f64;
    let ssr_w: f64 = within.residuals.iter().map(|e| e * e).sum();
    let sigma2_eps = if dof_w > 0.0 { ssr_w / dof_w } else { 0.0 };

    // Between regression on household means.
    let b_rows: Vec<Vec<f64>> = block_means.iter().map(|(xm, _)| xm.clone()).collect();
    let b_y: Vec<f64> = block_means.iter().map(|(_, ym)| *ym).collect();
    let between = ols(&design(&b_rows, &labels)?, &b_y)?;
    let dof_b = g as f64 - between.rank as f64;
    let ssr_b: f64 = between.residuals.iter().map(|e| e * e).sum();
    let inv_t = spans.iter().map(|&(a, b)| 1.0 / (b - a) as f64).sum::<f64>() / g as f64;
    let raw_alpha = if dof_b > 0.0 { ssr_b / dof_b - sigma2_eps * inv_t } else { 0.0 };
    let clamped = raw_alpha < 0.0;
    if clamped {
        log::warn!("estimated between-household variance {raw_alpha} is negative; set to 0 (pooled OLS)");
    }
    let sigma2_alpha = raw_alpha.max(0.0);

    // Quasi-demeaning and OLS on the transformed data.
    let mut t_rows = Vec::with_capacity(n);
    let mut t_y = Vec::with_capacity(n);
    for (&(a, b), (xm, ym)) in spans.iter().zip(&block_means) {
        let theta = options.theta.unwrap_or_else(|| {
            let denom = (b - a) as f64 * sigma2_alpha + sigma2_eps;
            if denom > 0.0 {
                1.0 - (sigma2_eps / denom).sqrt()
            } else {
                0.0
            }
        });
        for i in a..b {
            t_rows.push(rows[i].iter().zip(xm).map(|(&x, &m)| quasi_demean(x, theta * m)).collect::<Vec<_>>());
            t_y.push(y[i] - theta * ym);
        }
    }
    let full = design(&t_rows, &labels)?;
    let kept = independent_columns(&full);
    let reduced = full.select_columns(&kept);
    let fit = ols(&reduced, &t_y)?;

    // Household-clustered sandwich.
    let x = reduced.to_matrix();
    let bread = pseudo_inverse_sym(&(x.transpose() * &x)).0;
    let mut meat = DMatrix::<f64>::zeros(kept.len(), kept.len());
    for &(a, b) in &spans {
        let mut score = DVector::<f64>::zeros(kept.len());
        for i in a..b {
            for j in 0..kept.len() {
                score[j] += x[(i, j)] * fit.residuals[i];
            }
        }
        meat += &score * score.transpose();
    }
    let v = &bread * meat * &bread * (g as f64 / (g as f64 - 1.0));

    let mut coefficients: Vec<ReCoefficient> =
        labels.iter().map(|l| ReCoefficient { label: l.clone(), estimate: None, se: None }).collect();
    for (pos, &j) in kept.iter().enumerate() {
        coefficients[j].estimate = Some(fit.coefficients[pos]);
        coefficients[j].se = Some(v[(pos, pos)].max(0.0).sqrt());
    }
    let dropped: Vec<&str> = coefficients.iter().filter(|c| c.estimate.is_none()).map(|c| c.label.as_str()).collect();
    if !dropped.is_empty() {
        log::warn!("random-effects model: columns not identified: {}", dropped.join(", "));
    }

    let mut result = ReModelFit {
        coefficients,
        sigma2_alpha,
        sigma2_eps,
        clamped,
        n_households: g,
        n_obs: n,
        curve: Vec::new(),
        crossover_km: None,
    };
    // Covariates at their household means.
    let cov_part: f64 = (RE_TERMS.len()..k)
        .map(|j| result.coefficients[j].estimate.unwrap_or(0.0) * b_rows.iter().map(|r| r[j]).sum::<f64>() / g as f64)
        .sum();
    let max_d = b_rows.iter().map(|r| r[1]).fold(0.0f64, f64::max).ceil() as usize;
    let b: Vec<f64> = (0..RE_TERMS.len()).map(|i| result.term(i)).collect();
    result.curve = (0..=max_d)
        .map(|d| {
            let d = d as f64;
            let base = b[0] + b[1] * d + b[2] * d * d + cov_part;
            (d, base, base + b[3] + b[4] * d + b[5] * d * d)
        })
        .collect();
    result.crossover_km = crossover(b[3], b[4], b[5]);
    Ok(result)
}

fn re_rows(fit: &ReModelFit) -> Vec<[String; 3]> {
    let na = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    let mut rows: Vec<[String; 3]> = Vec::new();
    for c in &fit.coefficients {
        rows.push(["coefficient".into(), c.label.clone(), na(c.estimate)]);
        rows.push(["se".into(), c.label.clone(), na(c.se)]);
    }
    rows.push(["variance".into(), "sigma2_alpha".into(), fit.sigma2_alpha.to_string()]);
    rows.push(["variance".into(), "sigma2_eps".into(), fit.sigma2_eps.to_string()]);
    rows.push(["count".into(), "n_households".into(), fit.n_households.to_string()]);
    rows.push(["count".into(), "n_obs".into(), fit.n_obs.to_string()]);
    rows.push(["crossover".into(), "km".into(), na(fit.crossover_km)]);
    for (d, no_tax, tax) in &fit.curve {
        rows.push(["curve_no_tax".into(), d.to_string(), no_tax.to_string()]);
        rows.push(["curve_tax".into(), d.to_string(), tax.to_string()]);
    }
    rows
}

/// `product,kind,key,value`; unidentified coefficients are written as `NA`.
pub fn write_re_model(path: &Path, fits: &[(String, ReModelFit)]) -> Result<()> {
    let rows = fits.iter().flat_map(|(product, fit)| {
        re_rows(fit).into_iter().map(move |[k, key, v]| [product.clone(), k, key, v])
    });
    write_csv_atomic(path, &["product", "kind", "key", "value"], rows)
}
