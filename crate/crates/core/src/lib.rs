//! did-lab: a panel-econometrics engine for difference-in-differences
//! studies of a single, simultaneously adopted policy.
//!
//! The crate covers the whole path from raw purchase diaries to estimates:
//!
//! * [`panel`] turns purchase and household files into a prepared quarterly
//!   household panel (aggregation, day-count reweighting, Tukey outlier
//!   masking, seasonal detrending, income quintiles, covariate encoding).
//! * [`drdid`] estimates group-time effects ATT(q) with the unconditional and
//!   the doubly robust estimator, aggregates them over windows, and provides
//!   influence-function inference, multiplier-bootstrap simultaneous bands,
//!   pre-trend Wald tests and anticipation checks.
//! * [`twfe`] is the two-way fixed effects baseline.
//! * [`spatial`] holds the cross-border analyses (distance buckets, shares
//!   bought abroad, a random-effects distance model, regional effects and
//!   spillovers onto neighbouring control households).
//! * [`simulate`] plants known effects into synthetic panels and runs Monte
//!   Carlo studies against the estimators.
//! * [`cli`] binds everything to the `didlab` command.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod drdid;
pub mod error;
pub mod numerics;
pub mod panel;
pub mod quarter;
pub mod simulate;
pub mod spatial;
pub mod twfe;

pub use error::{Error, Result};
pub use quarter::{Quarter, Window};
