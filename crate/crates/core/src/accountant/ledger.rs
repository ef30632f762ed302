//! Composition of per-step log-moments and the tail-bound conversion to
//! `(epsilon, delta)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::moments::{log_moment_bound, ExactMoments, SubsampledGaussianStep};
use crate::error::{Error, Result};

/// Environment variable that caps the largest tracked order.
pub const LAMBDA_MAX_ENV: &str = "DPSGMCMC_LAMBDA_MAX";

/// Largest order of the default set.
pub const DEFAULT_LAMBDA_MAX: u32 = 2048;

const DENSE_PREFIX: u32 = 64;

/// Sorted set of integer moment orders tracked by a ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LambdaSet(Arc<[u32]>);

impl LambdaSet {
    /// Every integer in `1..=max`.
    pub fn dense(max: u32) -> Self {
        assert!(max >= 1, "lambda_max must be positive");
        Self((1..=max).collect())
    }

    /// Every integer up to 64, then roughly geometric steps (ratio 9/8) up
    /// to and including `max`.
    pub fn extended(max: u32) -> Self {
        assert!(max >= 1, "lambda_max must be positive");
        let mut orders: Vec<u32> = (1..=max.min(DENSE_PREFIX)).collect();
        let mut next = DENSE_PREFIX;
        while next < max {
            next = (next + next.div_ceil(8)).min(max);
            orders.push(next);
        }
        Self(orders.into())
    }

    /// The default set, capped by `DPSGMCMC_LAMBDA_MAX` when it is set.
    pub fn from_env() -> Self {
        let max = std::env::var(LAMBDA_MAX_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<u32>().ok())
            .filter(|&v| v >= 1)
            .unwrap_or(DEFAULT_LAMBDA_MAX);
        Self::extended(max)
    }

    pub fn from_orders(mut orders: Vec<u32>) -> Result<Self> {
        orders.sort_unstable();
        orders.dedup();
        if orders.is_empty() || orders[0] == 0 {
            return Err(Error::InvalidArgument("orders must be positive and non-empty".into()));
        }
        Ok(Self(orders.into()))
    }

    pub fn orders(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> u32 {
        *self.0.last().expect("non-empty")
    }
}

impl Default for LambdaSet {
    fn default() -> Self {
        Self::extended(DEFAULT_LAMBDA_MAX)
    }
}

/// How per-step log-moments are obtained.
#[derive(Debug, Clone, Copy, Default)]
pub enum MomentMethod {
    /// Closed-form bound; fails outside its validity region.
    Bound,
    /// Numerical evaluation of the exact moments.
    #[default]
    Exact,
    ExactWith(ExactMoments),
}

impl MomentMethod {
    /// Log-moments of one step at every order of `lambdas`.
    pub fn step_moments(&self, step: &SubsampledGaussianStep, lambdas: &LambdaSet) -> Result<Vec<f64>> {
        match self {
            MomentMethod::Bound => lambdas
                .orders()
                .iter()
                .map(|&l| log_moment_bound(step, l))
                .collect(),
            MomentMethod::Exact => exact_moments(&ExactMoments::default(), step, lambdas),
            MomentMethod::ExactWith(m) => exact_moments(m, step, lambdas),
        }
    }
}

fn exact_moments(m: &ExactMoments, step: &SubsampledGaussianStep, lambdas: &LambdaSet) -> Result<Vec<f64>> {
    crate::par::try_map(lambdas.orders(), |&l| m.log_moment(step, l))
}

/// An `(epsilon, delta)` guarantee; epsilon in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpend {
    pub epsilon: f64,
    pub delta: f64,
}

/// Tail-bound result together with the order attaining the minimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBound {
    pub value: f64,
    pub lambda: u32,
}

/// Accumulated log-moments, one entry per tracked order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentsLedger {
    lambdas: LambdaSet,
    log_moments: Vec<f64>,
    steps_composed: u64,
}

impl MomentsLedger {
    pub fn new(lambdas: LambdaSet) -> Self {
        let n = lambdas.len();
        Self {
            lambdas,
            log_moments: vec![0.0; n],
            steps_composed: 0,
        }
    }

    /// A fresh ledger over `1..=lambda_max`.
    pub fn dense(lambda_max: u32) -> Self {
        Self::new(LambdaSet::dense(lambda_max))
    }

    /// Ledger with explicit contents; used to evaluate tail bounds of
    /// externally computed moments.
    pub fn from_parts(lambdas: LambdaSet, log_moments: Vec<f64>, steps_composed: u64) -> Result<Self> {
        if log_moments.len() != lambdas.len() {
            return Err(Error::DimensionMismatch {
                expected: lambdas.len(),
                got: log_moments.len(),
            });
        }
        if log_moments.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("log-moments must not be NaN".into()));
        }
        Ok(Self {
            lambdas,
            log_moments,
            steps_composed,
        })
    }

    pub fn lambdas(&self) -> &LambdaSet {
        &self.lambdas
    }

    pub fn log_moments(&self) -> &[f64] {
        &self.log_moments
    }

    pub fn steps_composed(&self) -> u64 {
        self.steps_composed
    }

    /// Accumulated log-moment at order `lambda`, if tracked.
    pub fn at(&self, lambda: u32) -> Option<f64> {
        self.lambdas
            .orders()
            .binary_search(&lambda)
            .ok()
            .map(|i| self.log_moments[i])
    }

    /// Ledger after one more release of `step`.
    pub fn compose(&self, step: &SubsampledGaussianStep, method: &MomentMethod) -> Result<Self> {
        self.compose_repeated(step, 1, method)
    }

    /// Ledger after `count` identical releases of `step`.
    pub fn compose_repeated(&self, step: &SubsampledGaussianStep, count: u64, method: &MomentMethod) -> Result<Self> {
        let per_step = method.step_moments(step, &self.lambdas)?;
        Ok(self.add_moments(&per_step, count))
    }

    /// Ledger after releasing each step of `steps` in turn. Consecutive
    /// identical steps share one moment evaluation.
    pub fn compose_all(&self, steps: &[SubsampledGaussianStep], method: &MomentMethod) -> Result<Self> {
        let mut runs: Vec<(SubsampledGaussianStep, u64)> = Vec::new();
        for s in steps {
            match runs.last_mut() {
                Some((prev, n)) if prev == s => *n += 1,
                _ => runs.push((*s, 1)),
            }
        }
        let moments = crate::par::try_map(&runs, |(s, _)| method.step_moments(s, &self.lambdas))?;
        let mut out = self.clone();
        for ((_, n), m) in runs.iter().zip(&moments) {
            out = out.add_moments(m, *n);
        }
        Ok(out)
    }

    /// Adds `count` copies of a per-order moment vector.
    pub fn add_moments(&self, per_step: &[f64], count: u64) -> Self {
        assert_eq!(per_step.len(), self.log_moments.len());
        let c = count as f64;
        Self {
            lambdas: self.lambdas.clone(),
            log_moments: self
                .log_moments
                .iter()
                .zip(per_step)
                .map(|(a, b)| a + c * b)
                .collect(),
            steps_composed: self.steps_composed + count,
        }
    }

    /// Entrywise sum of two ledgers over the same orders.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.lambdas != other.lambdas {
            return Err(Error::InvalidArgument("ledgers track different orders".into()));
        }
        Ok(Self {
            lambdas: self.lambdas.clone(),
            log_moments: self
                .log_moments
                .iter()
                .zip(&other.log_moments)
                .map(|(a, b)| a + b)
                .collect(),
            steps_composed: self.steps_composed + other.steps_composed,
        })
    }

    /// `min_lambda exp(alpha(lambda) - lambda epsilon)`, clamped to `[0, 1]`.
    pub fn delta_for(&self, epsilon: f64) -> TailBound {
        let mut best = TailBound {
            value: f64::INFINITY,
            lambda: self.lambdas.orders()[0],
        };
        for (&l, &a) in self.lambdas.orders().iter().zip(&self.log_moments) {
            let log_delta = a - f64::from(l) * epsilon;
            if log_delta < best.value {
                best = TailBound {
                    value: log_delta,
                    lambda: l,
                };
            }
        }
        best.value = best.value.min(0.0).exp();
        best
    }

    /// `min_lambda (alpha(lambda) + ln(1/delta)) / lambda`.
    pub fn epsilon_for(&self, delta: f64) -> TailBound {
        let log_inv = -delta.ln();
        let mut best = TailBound {
            value: f64::INFINITY,
            lambda: self.lambdas.orders()[0],
        };
        for (&l, &a) in self.lambdas.orders().iter().zip(&self.log_moments) {
            let eps = (a + log_inv) / f64::from(l);
            if eps < best.value {
                best = TailBound { value: eps, lambda: l };
            }
        }
        best
    }

    /// Spend at fixed `delta`.
    pub fn spend_at_delta(&self, delta: f64) -> PrivacySpend {
        PrivacySpend {
            epsilon: self.epsilon_for(delta).value,
            delta,
        }
    }
}

/// Smallest `delta` certified at `epsilon` by `ledger`.
pub fn get_delta(ledger: &MomentsLedger, epsilon: f64) -> f64 {
    ledger.delta_for(epsilon).value
}

/// Smallest `epsilon` certified at `delta` by `ledger`.
pub fn get_epsilon(ledger: &MomentsLedger, delta: f64) -> f64 {
    ledger.epsilon_for(delta).value
}
