use std::path::Path;

use rayon::prelude::*;

use super::config::SimConfig;
use super::generate::simulate_panel;
use crate::drdid::{event_study, EstimationSpec};
use crate::error::{Error, Result};
use crate::numerics::derive_seed;
use crate::panel::{build_profile_table, prepare_panel, write_csv_atomic, PrepSettings};
use crate::quarter::Quarter;

/// Nominal size of the pre-trend test.
const PRETREND_ALPHA: f64 = 0.05;

/// One successful replication.
#[derive(Clone, Debug, PartialEq)]
pub struct McRun {
    pub replication: usize,
    pub seed: u64,
    /// `(name, estimate, se, truth)` per window.
    pub windows: Vec<(String, f64, f64, f64)>,
    /// `(quarter, estimate, se, truth)` per event-study point.
    pub points: Vec<(Quarter, f64, f64, f64)>,
    pub pointwise_covered: usize,
    /// Whether the simultaneous band covered every truth; `None` without
    /// bootstrap draws.
    pub band_covered: Option<bool>,
    pub pretrend_p: Option<f64>,
    /// Planted covariate-trend bias of the unconditional estimator, per window.
    pub trend_bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowSummary {
    pub name: String,
    pub truth: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub rmse: f64,
    pub mean_se: f64,
    pub sd_estimate: f64,
    /// Share of runs whose confidence interval covers the truth.
    pub coverage: f64,
    /// Share of runs with `|estimate - truth| <= 2 se`.
    pub within_2se: f64,
    /// Mean planted covariate-trend bias of the unconditional estimator.
    pub trend_bias: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McReport {
    pub replications: usize,
    pub failures: usize,
    /// First few failure messages.
    pub failure_messages: Vec<String>,
    pub windows: Vec<WindowSummary>,
    pub pointwise_coverage: f64,
    pub simultaneous_coverage: Option<f64>,
    pub pretrend_rejection: Option<f64>,
    pub runs: Vec<McRun>,
}

impl McReport {
    pub fn window(&self, name: &str) -> Option<&WindowSummary> {
        self.windows.iter().find(|w| w.name == name)
    }
}

fn replicate(config: &SimConfig, spec: &EstimationSpec, prep: &PrepSettings, replication: usize, seed: u64) -> Result<McRun> {
    let sim = simulate_panel(config, seed)?;
    let table = build_profile_table(sim.households, prep.profile_cutoff_year);
    let (panel, _) = prepare_panel(&sim.purchases, &table, &config.product, prep)?;
    let mut spec = spec.clone();
    spec.seed = derive_seed(seed, "mc-bootstrap");
    let result = event_study(&panel, &spec)?;
    let truth = &sim.truth;
    let r = spec.reference;
    let mut points = Vec::with_capacity(result.points.len());
    let mut covered = 0;
    let mut band = true;
    for p in &result.points {
        let t = truth.att(spec.outcome, p.quarter, r)?;
        covered += usize::from(p.pointwise_ci.0 <= t && t <= p.pointwise_ci.1);
        band &= p.simultaneous_ci.0 <= t && t <= p.simultaneous_ci.1;
        points.push((p.quarter, p.estimate, p.se, t));
    }
    let mut windows = Vec::with_capacity(result.windows.len());
    let mut trend_bias = Vec::with_capacity(result.windows.len());
    for (w, spec_w) in result.windows.iter().zip(&spec.windows) {
        windows.push((w.name.clone(), w.estimate, w.se, truth.window(spec.outcome, spec_w, r)?));
        trend_bias.push(truth.window_trend_bias(spec_w, r));
    }
    Ok(McRun {
        replication,
        seed,
        windows,
        points,
        pointwise_covered: covered,
        band_covered: result.critical_value.map(|_| band),
        pretrend_p: result.pretrend_p(),
        trend_bias,
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Repeat simulate, prepare and estimate `replications` times.
///
/// Replication `r` uses the seed derived from `(seed, "mc-replication-r")`.
/// A failing replication is counted and left out of the summaries.
pub fn monte_carlo(config: &SimConfig, spec: &EstimationSpec, prep: &PrepSettings, replications: usize, seed: u64) -> Result<McReport> {
    if replications < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 replications, got {replications}")));
    }
    config.validate()?;
    spec.validate()?;
    if spec.product != config.product {
        return Err(Error::InvalidConfig(format!(
            "estimation product {:?} differs from simulated product {:?}",
            spec.product, config.product
        )));
    }
    let outcomes: Vec<Result<McRun>> = (0..replications)
        .into_par_iter()
        .map(|r| replicate(config, spec, prep, r, derive_seed(seed, &format!("mc-replication-{r}"))))
        .collect();
    let mut runs = Vec::new();
    let mut failure_messages = Vec::new();
    let mut failures = 0;
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(run) => runs.push(run),
            Err(Error::InvalidConfig(msg)) => return Err(Error::InvalidConfig(msg)),
            Err(e) => {
                failures += 1;
                log::warn!("replication {r} failed: {e}");
                if failure_messages.len() < 5 {
                    failure_messages.push(format!("replication {r}: {e}"));
                }
            }
        }
    }
    let level = spec.level;
    let z = crate::numerics::normal_quantile(0.5 + level / 2.0);
    let windows = spec
        .windows
        .iter()
        .enumerate()
        .map(|(j, w)| {
            let est = || runs.iter().map(|r| r.windows[j].1);
            let truth = mean(runs.iter().map(|r| r.windows[j].3));
            let mean_estimate = mean(est());
            let bias = mean(runs.iter().map(|r| r.windows[j].1 - r.windows[j].3));
            let rmse = mean(runs.iter().map(|r| (r.windows[j].1 - r.windows[j].3).powi(2))).sqrt();
            let sd = if runs.len() > 1 {
                (est().map(|e| (e - mean_estimate).powi(2)).sum::<f64>() / (runs.len() - 1) as f64).sqrt()
            } else {
                f64::NAN
            };
            let covers = |k: f64| mean(runs.iter().map(|r| f64::from(u8::from((r.windows[j].1 - r.windows[j].3).abs() <= k * r.windows[j].2))));
            WindowSummary {
                name: w.name.clone(),
                truth,
                mean_estimate,
                bias,
                rmse,
                mean_se: mean(runs.iter().map(|r| r.windows[j].2)),
                sd_estimate: sd,
                coverage: covers(z),
                within_2se: covers(2.0),
                trend_bias: mean(runs.iter().map(|r| r.trend_bias[j])),
            }
        })
        .collect();
    let total_points: usize = runs.iter().map(|r| r.points.len()).sum();
    let pointwise_coverage = runs.iter().map(|r| r.pointwise_covered).sum::<usize>() as f64 / total_points.max(1) as f64;
    let bands: Vec<bool> = runs.iter().filter_map(|r| r.band_covered).collect();
    let simultaneous_coverage = (!bands.is_empty()).then(|| mean(bands.iter().map(|&b| f64::from(u8::from(b)))));
    let pvals: Vec<f64> = runs.iter().filter_map(|r| r.pretrend_p).collect();
    let pretrend_rejection = (!pvals.is_empty()).then(|| mean(pvals.iter().map(|&p| f64::from(u8::from(p < PRETREND_ALPHA)))));
    Ok(McReport {
        replications,
        failures,
        failure_messages,
        windows,
        pointwise_coverage,
        simultaneous_coverage,
        pretrend_rejection,
        runs,
    })
}

/// `statistic,window,value` rows.
pub fn write_mc_report(path: &Path, report: &McReport) -> Result<()> {
    let mut rows: Vec<[String; 3]> = vec![
        ["replications".into(), String::new(), report.replications.to_string()],
        ["failures".into(), String::new(), report.failures.to_string()],
    ];
    for w in &report.windows {
        for (stat, v) in [
            ("truth", w.truth),
            ("mean_estimate", w.mean_estimate),
            ("bias", w.bias),
            ("rmse", w.rmse),
            ("mean_se", w.mean_se),
            ("sd_estimate", w.sd_estimate),
            ("coverage", w.coverage),
            ("within_2se", w.within_2se),
            ("unconditional_trend_bias", w.trend_bias),
        ] {
            rows.push([stat.into(), w.name.clone(), v.to_string()]);
        }
    }
    rows.push(["coverage_pointwise".into(), String::new(), report.pointwise_coverage.to_string()]);
    if let Some(c) = report.simultaneous_coverage {
        rows.push(["coverage_simultaneous".into(), String::new(), c.to_string()]);
    }
    if let Some(p) = report.pretrend_rejection {
        rows.push(["pretrend_rejection_rate".into(), String::new(), p.to_string()]);
    }
    write_csv_atomic(path, &["statistic", "window", "value"], rows)
}
