//! Synthetic household panels with known effects.
//!
//! [`simulate_panel`] draws households with country-specific covariate
//! marginals and generates purchase diaries in the panel module's shapes. The
//! planted effects, income multipliers, cross-border shares and prices are
//! returned as [`SimTruth`], which also knows the exact estimand each
//! estimator targets after seasonal adjustment. [`monte_carlo`] repeats the
//! full prepare and estimate pipeline with derived seeds and summarises bias,
//! RMSE, coverage and pre-trend test size.

mod config;
mod generate;
mod monte_carlo;
mod truth;

pub use config::{AbroadModel, CountryProfile, SimConfig, TrendLoadings};
pub use generate::{effect_profile, region_for, simulate_panel, SimOutput, AGE_BANDS, ISCED_LEVELS};
pub use monte_carlo::{monte_carlo, write_mc_report, McReport, McRun, WindowSummary};
pub use truth::{crossover, truth_rows, write_truth, PlantedEffect, SimTruth};
