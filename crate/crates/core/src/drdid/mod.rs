//! Group-time treatment effects for a single adoption date.
//!
//! Every ATT(q) compares the outcome change between quarter `q` and a fixed
//! reference quarter across the taxed and the comparison arm. The
//! unconditional estimator uses raw mean changes. The doubly robust one
//! reweights comparison households by their fitted propensity odds and nets
//! out a per-quarter linear outcome model fitted on comparison households.
//!
//! Inference runs on household influence functions: standard errors, window
//! averages, the pre-trend Wald test and multiplier-bootstrap bands all
//! reuse the same per-household contributions, so correlation across quarters
//! within a household is respected throughout.

mod att;
mod event_study;
mod inference;
mod nuisance;
mod sample;
mod spec;

pub use att::{att_q_dr, att_q_unconditional, se_from_influence, AttEstimate};
pub use event_study::{anticipation_check, estimate_on, event_study, subgroup_estimate, treated_pretax_mean, EventStudyResult};
pub use inference::{
    aggregate, att_point, pct_change, simultaneous_bands, wald_pretrend, wald_test, AttPoint, InfluenceMatrix, WaldTest,
    WindowEstimate,
};
pub use nuisance::{complete_covariates, fit_nuisance, NuisanceFit, OverlapReport, MAX_CLAMPED_SHARE, PROPENSITY_CLAMP};
pub use sample::{IncomeGroup, Sample};
pub use spec::EstimationSpec;
