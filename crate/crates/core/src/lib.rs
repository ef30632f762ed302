//! Differentially-private stochastic-gradient MCMC.
//!
//! * [`accountant`]: log-moments of subsampled Gaussian releases, their
//!   composition, and conversion to `(epsilon, delta)`.
//! * [`bounds`]: step-size budgets for DP-SGLD and the comparison baseline.
//! * [`sampler`]: DP-SGLD / DP-SGHMC chains with clipping and privacy metering.
//! * [`models`]: differentiable Bayesian models.
//! * [`data`]: dataset ingestion, synthetic generators, minibatch sampling.
//! * [`eval`]: utility measurements and experiment sweeps.
//!
//! Inner loops over grids, repetitions and moment orders run on rayon when
//! the `parallel` feature is enabled (the default); results do not depend
//! on it.

// `!(x > 0.0)` style checks are intentional: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod bounds;
pub mod data;
pub mod error;
pub mod eval;
pub mod models;
pub mod par;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
