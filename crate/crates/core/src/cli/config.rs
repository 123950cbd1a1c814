use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::panel::{Covariate, PrepSettings};
use crate::quarter::Quarter;

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub purchases: Option<PathBuf>,
    pub households: Option<PathBuf>,
    pub panel_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub reference: Option<Quarter>,
    pub exclude_quarters: Option<Vec<Quarter>>,
    pub unconditional: bool,
    pub covariates: Option<Vec<Covariate>>,
    pub bootstrap_reps: Option<usize>,
    pub level: Option<f64>,
    pub seed: Option<u64>,
    /// `"income"` to add income-group estimates.
    pub subgroups: Option<String>,
    pub drop_regions: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpatialConfig {
    pub atn_threshold_km: Option<f64>,
    pub atn_outcome: Option<String>,
    pub dk_edges: Option<Vec<f64>>,
    pub de_edges: Option<Vec<f64>>,
    pub re_last_quarter: Option<Quarter>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Path of the simulation config.
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
}

/// Declarative run configuration. Relative paths are resolved against the
/// directory of the config file.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `error`, `warn`, `info`, `debug` or `trace`.
    pub verbosity: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub products: Vec<String>,
    pub outcomes: Vec<String>,
    pub input: InputConfig,
    pub prepare: PrepSettings,
    pub estimate: EstimateConfig,
    pub spatial: SpatialConfig,
    pub simulate: SimulateConfig,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::parse(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.out_dir);
        resolve(base, &mut cfg.input.purchases);
        resolve(base, &mut cfg.input.households);
        resolve(base, &mut cfg.input.panel_dir);
        resolve(base, &mut cfg.simulate.config);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Referenced input files must exist; settings must be in range.
    pub fn validate(&self) -> Result<()> {
        for p in [&self.input.purchases, &self.input.households, &self.simulate.config].into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::InvalidConfig(format!("{} does not exist", p.display())));
            }
        }
        if let Some(d) = &self.input.panel_dir {
            if !d.is_dir() {
                return Err(Error::InvalidConfig(format!("panel directory {} does not exist", d.display())));
            }
        }
        if let Some(v) = &self.verbosity {
            v.parse::<log::LevelFilter>().map_err(|_| Error::InvalidConfig(format!("unknown verbosity {v:?}")))?;
        }
        if !(self.prepare.tukey_k > 0.0) {
            return Err(Error::InvalidConfig(format!("tukey_k must be > 0, got {}", self.prepare.tukey_k)));
        }
        if let Some(l) = self.estimate.level {
            if !(l > 0.0 && l < 1.0) {
                return Err(Error::InvalidConfig(format!("level must lie in (0, 1), got {l}")));
            }
        }
        if let Some(s) = &self.estimate.subgroups {
            if s != "income" {
                return Err(Error::InvalidConfig(format!("unknown subgroups {s:?} (expected \"income\")")));
            }
        }
        Ok(())
    }
}
