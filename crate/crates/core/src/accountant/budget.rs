//! Smallest base noise multiplier meeting an `(epsilon, delta)` target.

use super::lattice::MomentLattice;
use super::ledger::{LambdaSet, MomentsLedger};
use crate::error::{Error, Result};

/// Per-step noise multipliers `sigma_t = base * t^(exponent / 2)`,
/// `t = 1..=steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule {
    pub base: f64,
    pub exponent: f64,
    pub steps: u64,
}

impl NoiseSchedule {
    pub fn sigma(&self, t: u64) -> f64 {
        if self.exponent == 0.0 {
            self.base
        } else {
            self.base * (t as f64).powf(0.5 * self.exponent)
        }
    }

    pub fn sigmas(&self) -> impl Iterator<Item = f64> + '_ {
        (1..=self.steps).map(move |t| self.sigma(t))
    }
}

/// Bisection settings for [`min_sigma_for_budget`].
#[derive(Debug, Clone)]
pub struct BudgetSearch {
    pub lambdas: LambdaSet,
    /// Relative width at which bisection stops.
    pub tolerance: f64,
    pub bracket: (f64, f64),
    pub max_iterations: usize,
    /// Spacing of the `ln sigma` lattice used for non-constant schedules.
    pub lattice_spacing: f64,
}

impl Default for BudgetSearch {
    fn default() -> Self {
        Self {
            lambdas: LambdaSet::from_env(),
            tolerance: 1e-3,
            bracket: (1.0, 1e4),
            max_iterations: 60,
            lattice_spacing: super::lattice::DEFAULT_SPACING,
        }
    }
}

/// Outcome of a budget search.
#[derive(Debug, Clone)]
pub struct BudgetSolution {
    /// Smallest certified base noise multiplier.
    pub base_sigma: f64,
    /// Ledger of the certified schedule.
    pub ledger: MomentsLedger,
    /// Certified delta at the requested epsilon (at most the target).
    pub delta: f64,
    pub iterations: usize,
}

impl BudgetSearch {
    /// Upper-bound ledger of `schedule` under sampling probability `q`.
    pub fn ledger(&self, lattice: &MomentLattice, schedule: &NoiseSchedule) -> Result<MomentsLedger> {
        if schedule.exponent == 0.0 || schedule.steps == 1 {
            // Constant schedule: one exact evaluation, scaled.
            let step = super::moments::SubsampledGaussianStep::new(lattice.q(), schedule.base)?;
            MomentsLedger::new(self.lambdas.clone()).compose_repeated(
                &step,
                schedule.steps,
                &super::ledger::MomentMethod::Exact,
            )
        } else {
            lattice.compose(schedule.sigmas())
        }
    }

    /// See [`min_sigma_for_budget`].
    pub fn solve(&self, q: f64, steps: u64, epsilon: f64, delta: f64, exponent: f64) -> Result<BudgetSolution> {
        if !(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) || steps == 0 {
            return Err(Error::InvalidArgument(format!(
                "need epsilon > 0, 0 < delta < 1, T >= 1 (got {epsilon}, {delta}, {steps})"
            )));
        }
        if !(0.0..1.0).contains(&q) {
            return Err(Error::InvalidArgument(format!("q must be in [0, 1), got {q}")));
        }
        if q >= 1.0 / 16.0 {
            return Err(Error::InfeasibleBudget(format!(
                "q = {q} >= 1/16: no noise multiplier >= 1 satisfies q < 1/(16 sigma)"
            )));
        }
        let lattice = MomentLattice::with_spacing(q, self.lambdas.clone(), self.lattice_spacing);
        let evaluate = |base: f64| -> Result<(MomentsLedger, f64)> {
            let schedule = NoiseSchedule { base, exponent, steps };
            let ledger = self.ledger(&lattice, &schedule)?;
            let d = ledger.delta_for(epsilon).value;
            Ok((ledger, d))
        };
        let (mut lo, mut hi) = self.bracket;
        let (mut best, d_hi) = evaluate(hi)?;
        if d_hi > delta {
            return Err(Error::InfeasibleBudget(format!(
                "even sigma = {hi} gives delta = {d_hi:.3e} > {delta:.3e} at epsilon = {epsilon} \
                 (largest tracked order {})",
                self.lambdas.max()
            )));
        }
        let (floor_ledger, d_lo) = evaluate(lo)?;
        if d_lo <= delta {
            return Ok(BudgetSolution {
                base_sigma: lo,
                ledger: floor_ledger,
                delta: d_lo,
                iterations: 0,
            });
        }
        let mut best_delta = d_hi;
        let mut iterations = 0;
        while hi / lo > 1.0 + self.tolerance && iterations < self.max_iterations {
            let mid = (lo * hi).sqrt();
            let (ledger, d) = evaluate(mid)?;
            if d <= delta {
                hi = mid;
                best = ledger;
                best_delta = d;
            } else {
                lo = mid;
            }
            iterations += 1;
        }
        Ok(BudgetSolution {
            base_sigma: hi,
            ledger: best,
            delta: best_delta,
            iterations,
        })
    }
}

/// Upper-bound ledger for releasing one step at each of `sigmas`: exact
/// when every step has the same noise, lattice-interpolated otherwise.
pub fn compose_schedule(q: f64, sigmas: &[f64], lambdas: &LambdaSet) -> Result<MomentsLedger> {
    let Some(&first) = sigmas.first() else {
        return Ok(MomentsLedger::new(lambdas.clone()));
    };
    if sigmas.iter().all(|&s| s == first) {
        let step = super::moments::SubsampledGaussianStep::new(q, first)?;
        MomentsLedger::new(lambdas.clone()).compose_repeated(
            &step,
            sigmas.len() as u64,
            &super::ledger::MomentMethod::Exact,
        )
    } else {
        MomentLattice::new(q, lambdas.clone()).compose(sigmas.iter().copied())
    }
}

/// Smallest base multiplier `sigma_1` such that the schedule
/// `sigma_t = sigma_1 t^(exponent/2)` over `steps` releases certifies
/// `(epsilon, delta)`, to relative tolerance 1e-3.
pub fn min_sigma_for_budget(q: f64, steps: u64, epsilon: f64, delta: f64, exponent: f64) -> Result<f64> {
    Ok(BudgetSearch::default()
        .solve(q, steps, epsilon, delta, exponent)?
        .base_sigma)
}
