//! Transformed-linear methods for multivariate extremes.
//!
//! * [`xlinear`]: softplus-conjugated vector operations on the positive orthant.
//! * [`rvsim`]: construction and sampling of `X = A o Z`.
//! * [`tpdm`]: marginal preprocessing and TPDM estimation.
//! * [`project`]: projections, prediction and partial tail correlation.
//! * [`inference`]: residual-based tests and confidence intervals.
//! * [`graphx`]: extremal graphs and DOT output.

// Negated comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod graphx;
pub mod inference;
pub mod io;
mod par;
pub mod project;
pub mod rvsim;
pub mod tpdm;
pub mod xlinear;

pub use error::{Error, Result};
pub use tpdm::{IpMatrix, TailSample};
