//! Deterministic numerical kernels shared by the estimators.
//!
//! Everything here is a pure function of its inputs. Randomness only enters
//! through [`RngStream`], a value-type handle on a counter-based generator,
//! so any result can be replayed bit-for-bit.

mod distributions;
mod linalg;
mod logistic;
mod quantile;
mod rng;

pub use distributions::{chi_square_sf, ln_gamma, normal_cdf, normal_quantile, two_sided_p};
pub use linalg::{independent_columns, ols, pseudo_inverse_sym, DesignMatrix, LinearFit};
pub use logistic::{logistic_irls, LogisticFit, PROBABILITY_FLOOR};
pub use quantile::quantile;
pub use rng::{derive_seed, rng_draw, DrawKind, RngStream};
