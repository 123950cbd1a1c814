use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use crate::panel::OutlierOrder;

#[derive(Parser, Debug)]
#[command(name = "didlab", version, about = "Difference-in-differences panel engine")]
pub struct Cli {
    /// Run configuration (TOML); command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More diagnostics on stderr (repeat for more).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    /// Only errors on stderr.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Aggregate purchase diaries into prepared quarterly panels.
    Prepare(PrepareArgs),
    /// Event studies, window aggregates, diagnostics and TWFE per product and outcome.
    Estimate(EstimateArgs),
    /// Distance buckets, shares bought abroad, random-effects model, regional effects and spillovers.
    Spatial(SpatialArgs),
    /// Write a synthetic panel with known effects.
    Simulate(SimulateArgs),
    /// Repeat simulate, prepare and estimate and summarise against the truth.
    MonteCarlo(MonteCarloArgs),
    /// Collect estimation outputs into a long-format table and a text summary.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OutlierOrderArg {
    BeforeDetrend,
    AfterDetrend,
}

impl From<OutlierOrderArg> for OutlierOrder {
    fn from(v: OutlierOrderArg) -> Self {
        match v {
            OutlierOrderArg::BeforeDetrend => OutlierOrder::BeforeDetrend,
            OutlierOrderArg::AfterDetrend => OutlierOrder::AfterDetrend,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SubgroupArg {
    Income,
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    #[arg(long)]
    pub purchases: Option<PathBuf>,
    #[arg(long)]
    pub households: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated products (default: every product in the purchases).
    #[arg(long, value_delimiter = ',')]
    pub product: Vec<String>,
    #[arg(long)]
    pub tukey_k: Option<f64>,
    #[arg(long, value_enum)]
    pub outlier_order: Option<OutlierOrderArg>,
    /// Skip seasonal adjustment.
    #[arg(long)]
    pub no_detrend: bool,
}

/// Flags shared by the commands that run event studies.
#[derive(Args, Debug, Clone, Default)]
pub struct SpecArgs {
    /// Comma-separated products.
    #[arg(long, value_delimiter = ',')]
    pub product: Vec<String>,
    /// Comma-separated outcomes.
    #[arg(long, value_delimiter = ',')]
    pub outcome: Vec<String>,
    /// Reference quarter, e.g. 2011Q1.
    #[arg(long)]
    pub reference: Option<String>,
    /// Comma-separated quarters left out of the event study ("" for none).
    #[arg(long)]
    pub exclude_quarters: Option<String>,
    /// Unconditional parallel trends (no covariates).
    #[arg(long)]
    pub unconditional: bool,
    #[arg(long)]
    pub bootstrap_reps: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Directory holding prepared panels (default: the output directory).
    #[arg(long)]
    pub panel_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also estimate within income groups.
    #[arg(long, value_enum)]
    pub subgroups: Option<SubgroupArg>,
    /// Comma-separated Danish regions to leave out.
    #[arg(long)]
    pub drop_regions: Option<String>,
}

#[derive(Args, Debug)]
pub struct SpatialArgs {
    /// Event-study flags for the regional effects (outcome defaults to weight).
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long)]
    pub panel_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// German households closer than this count as border households.
    #[arg(long)]
    pub atn_threshold_km: Option<f64>,
    /// Outcome of the spillover estimate (default price_per_100).
    #[arg(long)]
    pub atn_outcome: Option<String>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Simulation config (TOML); defaults apply where absent.
    #[arg(long)]
    pub sim_config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct MonteCarloArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long)]
    pub sim_config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub replications: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory holding estimation outputs; the report is written there.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
