//! Fast composition of long noise schedules.
//!
//! For a fixed sampling probability the exact log-moment at each order is a
//! decreasing, convex function of `ln sigma` (the `nu`-direction moment
//! dominates and is log-convex in `ln sigma`). Evaluating it on a lattice
//! `sigma_k = exp(k h)` and charging each step the chord between its two
//! neighbouring lattice points therefore over-estimates every step, so the
//! composed ledger stays a valid upper bound while needing only
//! `O(ln(sigma_max / sigma_min) / h)` quadratures instead of one per step.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::ledger::{LambdaSet, MomentsLedger};
use super::moments::{ExactMoments, SubsampledGaussianStep};
use crate::error::Result;

/// Default lattice spacing in `ln sigma`; chord over-estimate is about
/// `h^2 / 2` relative.
pub const DEFAULT_SPACING: f64 = 0.01;

/// Memoised exact moments on a log-spaced `sigma` lattice for one `q`.
#[derive(Debug)]
pub struct MomentLattice {
    q: f64,
    lambdas: LambdaSet,
    spacing: f64,
    exact: ExactMoments,
    cache: Mutex<HashMap<i64, Arc<Vec<f64>>>>,
}

impl MomentLattice {
    pub fn new(q: f64, lambdas: LambdaSet) -> Self {
        Self::with_spacing(q, lambdas, DEFAULT_SPACING)
    }

    pub fn with_spacing(q: f64, lambdas: LambdaSet, spacing: f64) -> Self {
        assert!(spacing > 0.0 && spacing.is_finite());
        Self {
            q,
            lambdas,
            spacing,
            exact: ExactMoments::default(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn lambdas(&self) -> &LambdaSet {
        &self.lambdas
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Number of lattice points evaluated so far.
    pub fn cached_points(&self) -> usize {
        self.cache.lock().expect("lattice cache poisoned").len()
    }

    fn sigma_at(&self, k: i64) -> f64 {
        (k as f64 * self.spacing).exp()
    }

    fn ensure(&self, keys: &[i64]) -> Result<()> {
        let missing: Vec<i64> = {
            let cache = self.cache.lock().expect("lattice cache poisoned");
            keys.iter().copied().filter(|k| !cache.contains_key(k)).collect()
        };
        if missing.is_empty() {
            return Ok(());
        }
        let computed = crate::par::try_map(&missing, |&k| {
            let step = SubsampledGaussianStep::new(self.q, self.sigma_at(k))?;
            self.exact.log_moments(&step, self.lambdas.orders())
        })?;
        let mut cache = self.cache.lock().expect("lattice cache poisoned");
        for (k, m) in missing.into_iter().zip(computed) {
            cache.insert(k, Arc::new(m));
        }
        Ok(())
    }

    /// Upper-bound ledger for releasing one step at each noise level in
    /// `sigmas` (all with this lattice's `q`).
    pub fn compose<I: IntoIterator<Item = f64>>(&self, sigmas: I) -> Result<MomentsLedger> {
        let mut weights: HashMap<i64, f64> = HashMap::new();
        let mut steps = 0u64;
        for sigma in sigmas {
            // validates sigma
            SubsampledGaussianStep::new(self.q, sigma)?;
            let x = sigma.ln() / self.spacing;
            let k = x.floor();
            let frac = x - k;
            let k = k as i64;
            *weights.entry(k).or_insert(0.0) += 1.0 - frac;
            if frac > 0.0 {
                *weights.entry(k + 1).or_insert(0.0) += frac;
            }
            steps += 1;
        }
        let mut keys: Vec<i64> = weights.keys().copied().collect();
        keys.sort_unstable();
        self.ensure(&keys)?;
        let cache = self.cache.lock().expect("lattice cache poisoned");
        let mut total = vec![0.0; self.lambdas.len()];
        for k in keys {
            let w = weights[&k];
            for (t, m) in total.iter_mut().zip(cache[&k].iter()) {
                *t += w * m;
            }
        }
        MomentsLedger::from_parts(self.lambdas.clone(), total, steps)
    }
}
