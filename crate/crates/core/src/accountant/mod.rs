//! Moments accountant for subsampled Gaussian releases.
//!
//! Per-step log-moments of the privacy loss (closed-form bound or exact
//! quadrature) are added across steps in a [`MomentsLedger`] and turned into
//! `(epsilon, delta)` by minimising the tail bound
//! `delta = min_lambda exp(alpha(lambda) - lambda epsilon)` over the tracked
//! orders.

mod budget;
mod lattice;
mod ledger;
mod moments;
pub mod quadrature;

pub use budget::{compose_schedule, min_sigma_for_budget, BudgetSearch, BudgetSolution, NoiseSchedule};
pub use lattice::{MomentLattice, DEFAULT_SPACING};
pub use ledger::{
    get_delta, get_epsilon, LambdaSet, MomentMethod, MomentsLedger, PrivacySpend, TailBound,
    DEFAULT_LAMBDA_MAX, LAMBDA_MAX_ENV,
};
pub use moments::{log_moment_bound, log_moment_exact, ExactMoments, SubsampledGaussianStep};
