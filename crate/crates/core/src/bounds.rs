//! Step-size budgets for DP-SGLD.
//!
//! Each update of the sampler releases `(eta_t / tau) sum_J g~ + z_t` with
//! `||g~|| <= L` and `z_t ~ Normal(0, eta_t / N)` per coordinate, i.e. a
//! subsampled Gaussian mechanism with noise multiplier
//! `sigma_t = tau / (L sqrt(N eta_t))`. Inverting that relation at the
//! smallest certified noise level gives the largest admissible step size.

use serde::{Deserialize, Serialize};

use crate::accountant::{BudgetSearch, BudgetSolution, MomentsLedger};
use crate::error::{Error, Result};

/// Decay exponent of the decreasing schedule.
pub const DECAY_EXPONENT: f64 = 1.0 / 3.0;

/// Privacy and problem parameters shared by every bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Dataset size N.
    pub n: u64,
    /// Iterations T.
    pub t: u64,
    pub epsilon: f64,
    pub delta: f64,
    /// Gradient clipping norm L.
    pub clip: f64,
    /// Sampling probability q.
    pub q: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n == 0 || self.t == 0 {
            return bad(format!("N and T must be positive (N={}, T={})", self.n, self.t));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must be in (0, 1), got {}", self.delta));
        }
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return bad(format!("clipping norm must be positive, got {}", self.clip));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return bad(format!("q must be in (0, 1), got {}", self.q));
        }
        Ok(())
    }

    /// Expected minibatch size `tau = q N`.
    pub fn tau(&self) -> f64 {
        self.q * self.n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Fixed,
    PowerDecay,
}

/// `eta_t = eta0 t^(-exponent)`; the exponent is 0 for a fixed schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizeSchedule {
    pub kind: ScheduleKind,
    pub eta0: f64,
    pub exponent: f64,
}

impl StepSizeSchedule {
    pub fn fixed(eta0: f64) -> Self {
        Self {
            kind: ScheduleKind::Fixed,
            eta0,
            exponent: 0.0,
        }
    }

    pub fn power_decay(eta0: f64) -> Self {
        Self {
            kind: ScheduleKind::PowerDecay,
            eta0,
            exponent: DECAY_EXPONENT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta0 must be positive, got {}", self.eta0)));
        }
        if self.kind == ScheduleKind::Fixed && self.exponent != 0.0 {
            return Err(Error::InvalidArgument("fixed schedule needs exponent 0".into()));
        }
        if self.exponent < 0.0 {
            return Err(Error::InvalidArgument("decay exponent must be non-negative".into()));
        }
        Ok(())
    }

    /// Step size at iteration `t >= 1`.
    pub fn eta(&self, t: u64) -> f64 {
        if self.exponent == 0.0 {
            self.eta0
        } else {
            self.eta0 * (t as f64).powf(-self.exponent)
        }
    }
}

/// Noise multiplier of one update with step size `eta_t`:
/// `tau / (L sqrt(N eta_t))`.
pub fn sigma_effective(eta_t: f64, inputs: &BoundInputs) -> f64 {
    inputs.tau() / (inputs.clip * (inputs.n as f64 * eta_t).sqrt())
}

/// Step size whose update has noise multiplier `sigma` (inverse of
/// [`sigma_effective`]).
pub fn eta_for_sigma(sigma: f64, inputs: &BoundInputs) -> f64 {
    let tau = inputs.tau();
    tau * tau / (inputs.n as f64 * inputs.clip * inputs.clip * sigma * sigma)
}

/// Conditions evaluated at one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConditions {
    pub t: u64,
    pub eta: f64,
    pub sigma: f64,
    /// `sigma_t >= 1`.
    pub sigma_at_least_one: bool,
    /// `q < 1 / (16 sigma_t)`.
    pub q_below_inverse_16_sigma: bool,
    /// The step is no less private than some step satisfying both of the
    /// above: `sigma_t >= 1` and `q < 1/16`. This is the operative check.
    pub dominated_by_valid_step: bool,
    /// Informational: `eta_t <= N / L^2`.
    pub literal_upper: bool,
    /// Informational: `eta_t > q^2 N / (256 L^2)`.
    pub literal_lower: bool,
}

impl StepConditions {
    /// Literal validity of the closed-form moment bound at this step.
    pub fn bound_valid(&self) -> bool {
        self.sigma_at_least_one && self.q_below_inverse_16_sigma
    }
}

/// Validity report for a schedule at its first and last iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub first: StepConditions,
    pub last: StepConditions,
}

impl ConditionReport {
    /// Every step is dominated by a step on which the closed-form bound is
    /// valid (checked at both ends; sigma_t is monotone in t).
    pub fn operative_pass(&self) -> bool {
        self.first.dominated_by_valid_step && self.last.dominated_by_valid_step
    }

    /// Human-readable list of failed operative conditions.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for c in [&self.first, &self.last] {
            if !c.sigma_at_least_one {
                out.push(format!("t={}: sigma_t = {} < 1", c.t, c.sigma));
            }
        }
        if !self.first.dominated_by_valid_step && self.first.sigma_at_least_one {
            out.push("q >= 1/16: no noise level >= 1 satisfies q < 1/(16 sigma)".into());
        }
        out.dedup();
        out
    }
}

fn conditions_at(schedule: &StepSizeSchedule, inputs: &BoundInputs, t: u64) -> StepConditions {
    let eta = schedule.eta(t);
    let sigma = sigma_effective(eta, inputs);
    let n = inputs.n as f64;
    let l2 = inputs.clip * inputs.clip;
    StepConditions {
        t,
        eta,
        sigma,
        sigma_at_least_one: sigma >= 1.0,
        q_below_inverse_16_sigma: inputs.q < 1.0 / (16.0 * sigma),
        dominated_by_valid_step: sigma >= 1.0 && inputs.q < 1.0 / 16.0,
        literal_upper: eta <= n / l2,
        literal_lower: eta > inputs.q * inputs.q * n / (256.0 * l2),
    }
}

/// Evaluates the validity conditions at `t = 1` and `t = T`.
pub fn check_conditions(schedule: &StepSizeSchedule, inputs: &BoundInputs) -> ConditionReport {
    ConditionReport {
        first: conditions_at(schedule, inputs, 1),
        last: conditions_at(schedule, inputs, inputs.t.max(1)),
    }
}

/// A certified step-size bound with the accountant state behind it.
#[derive(Debug, Clone)]
pub struct StepBound {
    /// Largest admissible step size at `t = 1`.
    pub eta1: f64,
    /// Decay exponent of the certified schedule.
    pub exponent: f64,
    /// Noise multiplier of the first update at `eta1`.
    pub sigma1: f64,
    pub ledger: MomentsLedger,
    pub delta: f64,
}

impl StepBound {
    pub fn schedule(&self) -> StepSizeSchedule {
        if self.exponent == 0.0 {
            StepSizeSchedule::fixed(self.eta1)
        } else {
            StepSizeSchedule {
                kind: ScheduleKind::PowerDecay,
                eta0: self.eta1,
                exponent: self.exponent,
            }
        }
    }

    /// Bound at iteration `t`.
    pub fn eta(&self, t: u64) -> f64 {
        self.schedule().eta(t)
    }
}

fn certified_bound(inputs: &BoundInputs, exponent: f64, search: &BudgetSearch) -> Result<StepBound> {
    inputs.validate()?;
    // sigma_t = tau/(L sqrt(N eta1 t^-e)) = sigma_1 t^(e/2)
    let BudgetSolution {
        base_sigma,
        ledger,
        delta,
        ..
    } = search.solve(inputs.q, inputs.t, inputs.epsilon, inputs.delta, exponent)?;
    Ok(StepBound {
        eta1: eta_for_sigma(base_sigma, inputs),
        exponent,
        sigma1: base_sigma,
        ledger,
        delta,
    })
}

/// Largest `eta_1` such that `eta_t = eta_1 t^(-1/3)` certifies the budget.
pub fn step_bound_decreasing(inputs: &BoundInputs) -> Result<StepBound> {
    step_bound_decreasing_with(inputs, &BudgetSearch::default())
}

pub fn step_bound_decreasing_with(inputs: &BoundInputs, search: &BudgetSearch) -> Result<StepBound> {
    certified_bound(inputs, DECAY_EXPONENT, search)
}

/// Largest constant step size that certifies the budget.
pub fn step_bound_fixed(inputs: &BoundInputs) -> Result<StepBound> {
    step_bound_fixed_with(inputs, &BudgetSearch::default())
}

pub fn step_bound_fixed_with(inputs: &BoundInputs, search: &BudgetSearch) -> Result<StepBound> {
    certified_bound(inputs, 0.0, search)
}

/// Prior-work baseline
/// `eps^2 N / (128 L^2 T ln(2.5 T / delta) ln(2 / delta))`, natural logs.
pub fn step_bound_wang(inputs: &BoundInputs) -> f64 {
    let BoundInputs {
        n,
        t,
        epsilon,
        delta,
        clip,
        ..
    } = *inputs;
    let t = t as f64;
    epsilon * epsilon * n as f64
        / (128.0 * clip * clip * t * (2.5 * t / delta).ln() * (2.0 / delta).ln())
}
