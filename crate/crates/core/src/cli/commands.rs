use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::args::{Command, EstimateArgs, MonteCarloArgs, PrepareArgs, ReportArgs, SimulateArgs, SpatialArgs, SpecArgs};
use super::config::RunConfig;
use super::{report, DirLock, Failure, EXIT_EMPTY_PRODUCT, EXIT_FAILURE, EXIT_UNKNOWN, EXIT_USAGE};
use crate::drdid::{anticipation_check, estimate_on, subgroup_estimate, AttPoint, EstimationSpec, EventStudyResult, Sample};
use crate::error::Error;
use crate::panel::{
    build_profile_table, prepare_panel, read_households, read_panel, read_purchases, write_csv_atomic, write_households,
    write_panel, write_prep_report, write_profiles, write_purchases, Country, Outcome, PrepSettings, PreparedPanel,
};
use crate::quarter::{parse_quarter_list, Quarter};
use crate::simulate::{monte_carlo, simulate_panel, write_mc_report, write_truth, SimConfig};
use crate::spatial::{
    atn_estimate, bucket_distances, default_edges, random_effects_distance, regional_att, share_abroad_series, write_atn,
    write_distance_buckets, write_re_model, write_regional_att, write_share_abroad, ReOptions, ATN_BORDER_KM,
};
use crate::twfe::twfe_estimate;

type CmdResult<T = ()> = Result<T, Failure>;

const DEFAULT_OUT: &str = "didlab_out";
pub(super) const SUMMARY_FILE: &str = "summary.csv";
pub(super) const ATT_HEADER: [&str; 10] =
    ["quarter", "estimate", "se", "p", "ci_lo", "ci_hi", "band_lo", "band_hi", "n_treated", "n_control"];
const SUMMARY_HEADER: [&str; 5] = ["product", "outcome", "block", "statistic", "value"];

pub(super) fn dispatch(command: &Command, cfg: &RunConfig) -> CmdResult {
    match command {
        Command::Prepare(a) => prepare(a, cfg),
        Command::Estimate(a) => estimate(a, cfg),
        Command::Spatial(a) => spatial(a, cfg),
        Command::Simulate(a) => simulate(a, cfg),
        Command::MonteCarlo(a) => run_monte_carlo(a, cfg),
        Command::Report(a) => report_cmd(a, cfg),
    }
}

fn out_dir(arg: &Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    arg.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn required(arg: &Option<PathBuf>, cfg: &Option<PathBuf>, flag: &str) -> CmdResult<PathBuf> {
    let p = arg.clone().or_else(|| cfg.clone()).ok_or_else(|| Failure::new(EXIT_USAGE, format!("{flag} is required")))?;
    if !p.is_file() {
        return Err(Failure::new(EXIT_FAILURE, format!("{} does not exist", p.display())));
    }
    Ok(p)
}

fn parse_outcome(s: &str) -> CmdResult<Outcome> {
    s.parse().map_err(|_| {
        let known: Vec<&str> = Outcome::ALL.iter().map(|o| o.as_str()).collect();
        Failure::new(EXIT_UNKNOWN, format!("unknown outcome {s:?} (expected one of {})", known.join(", ")))
    })
}

fn invalid(e: impl ToString) -> Failure {
    Failure::new(EXIT_FAILURE, e.to_string())
}

fn fmt(v: f64) -> String {
    v.to_string()
}

/// Event-study spec from defaults, the config file and flags, in that order.
fn build_spec(product: &str, outcome: Outcome, cfg: &RunConfig, args: &SpecArgs) -> CmdResult<EstimationSpec> {
    let e = &cfg.estimate;
    let mut spec = EstimationSpec::new(product, outcome);
    if let Some(r) = e.reference {
        spec.reference = r;
    }
    if let Some(r) = &args.reference {
        spec.reference = r.parse().map_err(invalid)?;
    }
    if let Some(x) = &e.exclude_quarters {
        spec.excluded = x.clone();
    }
    if let Some(x) = &args.exclude_quarters {
        spec.excluded = parse_quarter_list(x).map_err(invalid)?;
    }
    if e.unconditional || args.unconditional {
        spec.conditional = false;
    }
    if let Some(c) = &e.covariates {
        spec.covariates = c.clone();
    }
    spec.bootstrap_reps = args.bootstrap_reps.or(e.bootstrap_reps).unwrap_or(spec.bootstrap_reps);
    spec.level = args.level.or(e.level).unwrap_or(spec.level);
    spec.seed = args.seed.or(e.seed).unwrap_or(spec.seed);
    spec.validate().map_err(Failure::from)?;
    Ok(spec)
}

fn panel_path(dir: &Path, product: &str) -> PathBuf {
    dir.join(format!("panel_{product}.csv"))
}

fn load_panel(dir: &Path, product: &str) -> CmdResult<PreparedPanel> {
    if !panel_path(dir, product).is_file() {
        return Err(Failure::new(EXIT_UNKNOWN, format!("unknown product {product:?}: no prepared panel in {}", dir.display())));
    }
    Ok(read_panel(dir, product)?)
}

/// Products from flags, then config, then every prepared panel in `dir`.
fn products(args: &[String], cfg: &RunConfig, dir: &Path) -> CmdResult<Vec<String>> {
    let list: Vec<String> = if !args.is_empty() { args.to_vec() } else { cfg.products.clone() };
    if !list.is_empty() {
        return Ok(list.into_iter().map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect());
    }
    let mut found = BTreeSet::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Failure::from(Error::io(dir, e)))?;
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(p) = name.strip_prefix("panel_").and_then(|n| n.strip_suffix(".csv")) {
            found.insert(p.to_string());
        }
    }
    if found.is_empty() {
        return Err(Failure::new(EXIT_UNKNOWN, format!("no prepared panels in {}", dir.display())));
    }
    Ok(found.into_iter().collect())
}

fn outcomes(args: &[String], cfg: &RunConfig, default: Outcome) -> CmdResult<Vec<Outcome>> {
    let list = if !args.is_empty() { args } else { &cfg.outcomes };
    if list.is_empty() {
        return Ok(vec![default]);
    }
    list.iter().map(|s| parse_outcome(s)).collect()
}

fn prepare(args: &PrepareArgs, cfg: &RunConfig) -> CmdResult {
    let purchases_path = required(&args.purchases, &cfg.input.purchases, "--purchases")?;
    let households_path = required(&args.households, &cfg.input.households, "--households")?;
    let mut settings: PrepSettings = cfg.prepare.clone();
    if let Some(k) = args.tukey_k {
        settings.tukey_k = k;
    }
    if let Some(o) = args.outlier_order {
        settings.outlier_order = o.into();
    }
    if args.no_detrend {
        settings.detrend = false;
    }
    let out = out_dir(&args.out, cfg);
    let _lock = DirLock::acquire(&out)?;

    let records = read_purchases(&purchases_path)?;
    let annual = read_households(&households_path)?;
    let table = build_profile_table(annual, settings.profile_cutoff_year);
    let requested: Vec<String> = if !args.product.is_empty() { args.product.clone() } else { cfg.products.clone() };
    let products: Vec<String> = if requested.is_empty() {
        records.iter().map(|r| r.product.clone()).collect::<BTreeSet<_>>().into_iter().collect()
    } else {
        requested
    };
    if products.is_empty() {
        return Err(Failure::new(EXIT_EMPTY_PRODUCT, "the purchase file holds no records"));
    }
    let mut panels = Vec::with_capacity(products.len());
    let mut reports = Vec::with_capacity(products.len());
    for product in &products {
        if !records.iter().any(|r| &r.product == product) {
            return Err(Failure::new(EXIT_EMPTY_PRODUCT, format!("product {product:?} has no purchase records")));
        }
        let (panel, report) = prepare_panel(&records, &table, product, &settings).map_err(|e| match e {
            Error::InsufficientData(m) => Failure::new(EXIT_EMPTY_PRODUCT, format!("product {product:?}: {m}")),
            other => other.into(),
        })?;
        log::info!("{product}: {} households, {} quarters", panel.n_households(), panel.n_quarters());
        panels.push(panel);
        reports.push(report);
    }
    write_profiles(&out.join("profiles.csv"), &table.profiles)?;
    for panel in &panels {
        write_panel(&out, panel)?;
    }
    write_prep_report(&out.join("prep_report.csv"), &reports)?;
    Ok(())
}

fn att_rows(points: &[AttPoint]) -> Vec<[String; 10]> {
    points
        .iter()
        .map(|p| {
            [
                p.quarter.to_string(),
                fmt(p.estimate),
                fmt(p.se),
                fmt(p.p_value),
                fmt(p.pointwise_ci.0),
                fmt(p.pointwise_ci.1),
                fmt(p.simultaneous_ci.0),
                fmt(p.simultaneous_ci.1),
                p.n_treated.to_string(),
                p.n_control.to_string(),
            ]
        })
        .collect()
}

struct Summary {
    rows: Vec<[String; 5]>,
}

impl Summary {
    fn push(&mut self, product: &str, outcome: Outcome, block: &str, stat: &str, value: String) {
        self.rows.push([product.to_string(), outcome.as_str().to_string(), block.to_string(), stat.to_string(), value]);
    }

    fn event_study(&mut self, product: &str, outcome: Outcome, prefix: &str, r: &EventStudyResult) {
        for w in &r.windows {
            let block = format!("{prefix}{}", w.name);
            self.push(product, outcome, &block, "estimate", fmt(w.estimate));
            self.push(product, outcome, &block, "se", fmt(w.se));
            self.push(product, outcome, &block, "p", fmt(w.p_value));
            if let Some(pc) = w.pct_change {
                self.push(product, outcome, &block, "pct_change", fmt(pc));
            }
            self.push(product, outcome, &block, "n_treated", w.n_treated.to_string());
            self.push(product, outcome, &block, "n_control", w.n_control.to_string());
        }
        let block = format!("{prefix}pretrend");
        if let Some(t) = r.pretrend {
            self.push(product, outcome, &block, "statistic", fmt(t.statistic));
            self.push(product, outcome, &block, "dof", t.dof.to_string());
            self.push(product, outcome, &block, "p", fmt(t.p_value));
        }
        if let Some(b) = r.baseline {
            self.push(product, outcome, &format!("{prefix}sample"), "baseline", fmt(b));
        }
        if let Some(c) = r.critical_value {
            self.push(product, outcome, &format!("{prefix}bootstrap"), "critical_value", fmt(c));
        }
    }
}

struct EstimateOutput {
    file: String,
    rows: Vec<[String; 10]>,
}

fn estimate(args: &EstimateArgs, cfg: &RunConfig) -> CmdResult {
    let out = out_dir(&args.out, cfg);
    let panel_dir = args.panel_dir.clone().or_else(|| cfg.input.panel_dir.clone()).unwrap_or_else(|| out.clone());
    let products = products(&args.spec.product, cfg, &panel_dir)?;
    let outcome_list = outcomes(&args.spec.outcome, cfg, Outcome::Weight)?;
    let drop: Vec<String> = match &args.drop_regions {
        Some(s) => s.split(',').map(|r| r.trim().to_string()).filter(|r| !r.is_empty()).collect(),
        None => cfg.estimate.drop_regions.clone(),
    };
    let subgroups = args.subgroups.is_some() || cfg.estimate.subgroups.is_some();
    let _lock = DirLock::acquire(&out)?;

    let mut files = Vec::new();
    let mut summary = Summary { rows: Vec::new() };
    for product in &products {
        let panel = load_panel(&panel_dir, product)?;
        let mut sample = Sample::countries(&panel);
        if !drop.is_empty() {
            let known: BTreeSet<&str> =
                panel.households.iter().filter(|p| p.country == Country::DK).map(|p| p.region.as_str()).collect();
            for r in &drop {
                if !known.contains(r.as_str()) {
                    log::warn!("region {r:?} does not occur among Danish households of {product}");
                }
            }
            sample = sample.drop_regions(&panel, &drop);
        }
        for &outcome in &outcome_list {
            let spec = build_spec(product, outcome, cfg, &args.spec)?;
            let result = estimate_on(&panel, &spec, &sample)?;
            summary.event_study(product, outcome, "", &result);
            summary.push(product, outcome, "sample", "n_treated", result.n_treated.to_string());
            summary.push(product, outcome, "sample", "n_control", result.n_control.to_string());
            if let Some(o) = &result.overlap {
                for (stat, v) in [
                    ("min_treated", o.min_treated),
                    ("max_treated", o.max_treated),
                    ("min_control", o.min_control),
                    ("max_control", o.max_control),
                ] {
                    summary.push(product, outcome, "overlap", stat, fmt(v));
                }
                summary.push(product, outcome, "overlap", "clamped_controls", o.clamped_controls.to_string());
            }
            for w in &spec.windows {
                match twfe_estimate(&panel, outcome, w, &spec.excluded, &sample) {
                    Ok(t) => {
                        let block = format!("twfe:{}", w.name);
                        summary.push(product, outcome, &block, "estimate", fmt(t.estimate));
                        summary.push(product, outcome, &block, "se", fmt(t.se));
                        summary.push(product, outcome, &block, "p", fmt(t.p_value));
                        if let Some(pc) = t.pct_change {
                            summary.push(product, outcome, &block, "pct_change", fmt(pc));
                        }
                        summary.push(product, outcome, &block, "n_households", t.n_households.to_string());
                    }
                    Err(e) => log::warn!("{product}/{outcome}: TWFE for {} skipped: {e}", w.name),
                }
            }
            match anticipation_check(&panel, &spec, &sample) {
                Ok(points) => {
                    for p in points {
                        let block = format!("anticipation:{}", p.quarter);
                        summary.push(product, outcome, &block, "estimate", fmt(p.estimate));
                        summary.push(product, outcome, &block, "se", fmt(p.se));
                        summary.push(product, outcome, &block, "p", fmt(p.p_value));
                    }
                }
                Err(e) => log::warn!("{product}/{outcome}: anticipation check skipped: {e}"),
            }
            files.push(EstimateOutput { file: format!("att_{product}_{outcome}.csv"), rows: att_rows(&result.points) });
            if subgroups {
                for (group, r) in subgroup_estimate(&panel, &spec, &sample) {
                    summary.event_study(product, outcome, &format!("income:{}:", group.as_str()), &r);
                    files.push(EstimateOutput {
                        file: format!("att_{product}_{outcome}_income_{}.csv", group.as_str()),
                        rows: att_rows(&r.points),
                    });
                }
            }
        }
    }
    for f in &files {
        write_csv_atomic(&out.join(&f.file), &ATT_HEADER, &f.rows)?;
    }
    write_csv_atomic(&out.join(SUMMARY_FILE), &SUMMARY_HEADER, &summary.rows)?;
    Ok(())
}

fn spatial(args: &SpatialArgs, cfg: &RunConfig) -> CmdResult {
    let out = out_dir(&args.out, cfg);
    let panel_dir = args.panel_dir.clone().or_else(|| cfg.input.panel_dir.clone()).unwrap_or_else(|| out.clone());
    let products = products(&args.spec.product, cfg, &panel_dir)?;
    let regional_outcome = outcomes(&args.spec.outcome, cfg, Outcome::Weight)?[0];
    let atn_outcome = match args.atn_outcome.as_ref().or(cfg.spatial.atn_outcome.as_ref()) {
        Some(s) => parse_outcome(s)?,
        None => Outcome::PricePer100,
    };
    let threshold = args.atn_threshold_km.or(cfg.spatial.atn_threshold_km).unwrap_or(ATN_BORDER_KM);
    let dk_edges = cfg.spatial.dk_edges.clone().unwrap_or_else(|| default_edges(Country::DK).to_vec());
    let de_edges = cfg.spatial.de_edges.clone().unwrap_or_else(|| default_edges(Country::DE).to_vec());
    let re_options = ReOptions { last_quarter: cfg.spatial.re_last_quarter.unwrap_or(Quarter::TAX_END), ..ReOptions::default() };
    let _lock = DirLock::acquire(&out)?;

    let (mut buckets, mut shares, mut re, mut regions, mut atn) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for product in &products {
        let panel = load_panel(&panel_dir, product)?;
        for (country, edges) in [(Country::DK, &dk_edges), (Country::DE, &de_edges)] {
            buckets.push((product.clone(), bucket_distances(&panel.households, country, edges)?));
            for row in share_abroad_series(&panel, country, edges)? {
                shares.push((product.clone(), row));
            }
        }
        match random_effects_distance(&panel, &re_options) {
            Ok(fit) => re.push((product.clone(), fit)),
            Err(e) => log::warn!("{product}: random-effects model skipped: {e}"),
        }
        let spec = build_spec(product, regional_outcome, cfg, &args.spec)?;
        for r in regional_att(&panel, &spec)? {
            if let Err(e) = &r.result {
                log::warn!("{product}: region {} not estimated: {e}", r.region);
            }
            regions.push((product.clone(), r));
        }
        let atn_spec = build_spec(product, atn_outcome, cfg, &args.spec)?;
        match atn_estimate(&panel, threshold, &atn_spec) {
            Ok(a) => atn.push(a),
            Err(e) => log::warn!("{product}: spillover estimate skipped: {e}"),
        }
    }
    write_distance_buckets(&out.join("distance_buckets.csv"), &buckets)?;
    write_share_abroad(&out.join("share_abroad.csv"), &shares)?;
    write_re_model(&out.join("re_model.csv"), &re)?;
    write_regional_att(&out.join("regional_att.csv"), &regions)?;
    write_atn(&out.join("atn.csv"), &atn)?;
    Ok(())
}

fn sim_config(arg: &Option<PathBuf>, cfg: &RunConfig) -> CmdResult<SimConfig> {
    let Some(path) = arg.clone().or_else(|| cfg.simulate.config.clone()) else {
        return Ok(SimConfig::default());
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::from(Error::io(&path, e)))?;
    let sim: SimConfig = toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    sim.validate()?;
    Ok(sim)
}

fn simulate(args: &SimulateArgs, cfg: &RunConfig) -> CmdResult {
    let sim = sim_config(&args.sim_config, cfg)?;
    let seed = args.seed.or(cfg.simulate.seed).unwrap_or(0);
    let out = out_dir(&args.out, cfg);
    let _lock = DirLock::acquire(&out)?;
    let output = simulate_panel(&sim, seed)?;
    write_purchases(&out.join("purchases.csv"), &output.purchases)?;
    write_households(&out.join("households.csv"), &output.households)?;
    write_truth(&out.join("truth.csv"), &output.truth)?;
    Ok(())
}

fn run_monte_carlo(args: &MonteCarloArgs, cfg: &RunConfig) -> CmdResult {
    let sim = sim_config(&args.sim_config, cfg)?;
    let outcome = outcomes(&args.spec.outcome, cfg, Outcome::Weight)?[0];
    // Bootstrap seeds are derived per replication from the run seed.
    let spec = build_spec(&sim.product, outcome, cfg, &args.spec)?;
    let replications = args.replications.or(cfg.simulate.replications).unwrap_or(100);
    let seed = args.spec.seed.or(cfg.simulate.seed).unwrap_or(0);
    let out = out_dir(&args.out, cfg);
    let _lock = DirLock::acquire(&out)?;
    let report = monte_carlo(&sim, &spec, &cfg.prepare, replications, seed)?;
    if report.failures > 0 {
        log::warn!("{} of {} replications failed", report.failures, report.replications);
    }
    write_mc_report(&out.join("mc_report.csv"), &report)?;
    Ok(())
}

fn report_cmd(args: &ReportArgs, cfg: &RunConfig) -> CmdResult {
    let out = out_dir(&args.out, cfg);
    if !out.is_dir() {
        return Err(Failure::new(super::EXIT_NOTHING_TO_REPORT, format!("{} does not exist", out.display())));
    }
    let _lock = DirLock::acquire(&out)?;
    report::write_report(&out)
}
