//! Inverse probability weighting for nonmonotone missing-at-random data.
//!
//! The crate fits a multinomial-logistic missingness model with one block per
//! incomplete pattern, either by unconstrained maximum likelihood or by a
//! constrained Bayesian sampler, and uses it to weight complete cases in an
//! estimating equation. An augmented estimator recovers efficiency from the
//! incomplete rows.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod aipw;
pub mod basis;
pub mod cbe;
pub mod cli;
pub mod data;
pub mod error;
pub mod estfn;
pub mod ipw;
pub mod linalg;
pub mod missingness;
pub mod optim;
pub mod report;
pub mod rng;
pub mod simulation;

pub use error::{Error, Result};
