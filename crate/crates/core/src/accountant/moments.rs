//! Per-step log-moments of the privacy loss of a subsampled Gaussian release.
//!
//! One step releases a sum over a probability-`q` sample of unit-norm
//! contributions plus `Normal(0, sigma^2)` noise. The worst-case pair is
//! one-dimensional: `mu0 = Normal(0, sigma^2)` against
//! `nu = (1 - q) Normal(0, sigma^2) + q Normal(1, sigma^2)`. The log-moment of
//! order `lambda` is the larger of
//!
//! * `ln E_mu0[(mu0/nu)^lambda]`
//! * `ln E_nu[(nu/mu0)^lambda]`
//!
//! Both are evaluated by adaptive quadrature. When the moment is close to
//! zero the integrands are rewritten as `E[...] - 1` (through `expm1` and
//! `ln_1p`) so that tiny moments keep full relative precision; when it is
//! large the integrand is rescaled by its peak and integrated in log space.

use serde::{Deserialize, Serialize};

use super::quadrature::{uniform_breaks, Quadrature};
use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Half-width of the integration windows, in units of sigma.
const WINDOW_SIGMAS: f64 = 20.0;

/// Above this peak log-magnitude the integrand is rescaled in log space.
const SCALED_THRESHOLD: f64 = 200.0;

/// Mixture components lighter than `max - MIXTURE_CUTOFF` (in log space)
/// do not get their own integration window.
const MIXTURE_CUTOFF: f64 = 70.0;

/// One noisy minibatch release: sampling probability `q` and noise standard
/// deviation `sigma` per unit of L2 sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsampledGaussianStep {
    q: f64,
    sigma: f64,
}

impl SubsampledGaussianStep {
    pub fn new(q: f64, sigma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&q) {
            return Err(Error::InvalidArgument(format!(
                "sampling probability must be in [0, 1), got {q}"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise multiplier must be positive and finite, got {sigma}"
            )));
        }
        Ok(Self { q, sigma })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `sigma >= 1` and `q < 1 / (16 sigma)`: the closed-form bound applies.
    pub fn is_bound_valid(&self) -> bool {
        self.sigma >= 1.0 && self.q < 1.0 / (16.0 * self.sigma)
    }

    /// Largest order for which the closed-form bound is stated,
    /// `sigma^2 ln(1 / (q sigma))` (infinite when `q = 0`).
    pub fn max_bound_lambda(&self) -> f64 {
        if self.q == 0.0 {
            f64::INFINITY
        } else {
            self.sigma * self.sigma * (1.0 / (self.q * self.sigma)).ln()
        }
    }
}

/// Closed-form upper bound `q^2 lambda (lambda + 1) / ((1 - q) sigma^2)`.
///
/// The higher-order remainder of the bound has no explicit constant and is
/// dropped, so budget certification relies on [`log_moment_exact`].
pub fn log_moment_bound(step: &SubsampledGaussianStep, lambda: u32) -> Result<f64> {
    if lambda == 0 {
        return Err(Error::InvalidArgument("lambda must be positive".into()));
    }
    let (q, sigma) = (step.q, step.sigma);
    if sigma < 1.0 {
        return Err(Error::Validity(format!("sigma = {sigma} < 1")));
    }
    if q >= 1.0 / (16.0 * sigma) {
        return Err(Error::Validity(format!(
            "q = {q} >= 1/(16 sigma) = {}",
            1.0 / (16.0 * sigma)
        )));
    }
    let cap = step.max_bound_lambda();
    if f64::from(lambda) > cap {
        return Err(Error::Validity(format!(
            "lambda = {lambda} > sigma^2 ln(1/(q sigma)) = {cap}"
        )));
    }
    let l = f64::from(lambda);
    Ok(q * q * l * (l + 1.0) / ((1.0 - q) * sigma * sigma))
}

/// Exact log-moment of order `lambda` using the default quadrature settings.
pub fn log_moment_exact(step: &SubsampledGaussianStep, lambda: u32) -> Result<f64> {
    ExactMoments::default().log_moment(step, lambda)
}

/// Quadrature-backed evaluator of exact log-moments.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMoments {
    pub quadrature: Quadrature,
}

impl ExactMoments {
    pub fn log_moment(&self, step: &SubsampledGaussianStep, lambda: u32) -> Result<f64> {
        if lambda == 0 {
            return Err(Error::InvalidArgument("lambda must be positive".into()));
        }
        if step.q == 0.0 {
            return Ok(0.0);
        }
        let pair = Pair::new(step.q, step.sigma);
        let toward_mu0 = pair.moment_under_mu0(&self.quadrature, lambda)?;
        let toward_nu = pair.moment_under_nu(&self.quadrature, lambda)?;
        Ok(toward_mu0.max(toward_nu).max(0.0))
    }

    /// Log-moments for every order in `lambdas`.
    pub fn log_moments(&self, step: &SubsampledGaussianStep, lambdas: &[u32]) -> Result<Vec<f64>> {
        lambdas.iter().map(|&l| self.log_moment(step, l)).collect()
    }
}

/// Precomputed constants of the worst-case pair for one `(q, sigma)`.
struct Pair {
    q: f64,
    sigma: f64,
    inv_two_var: f64,
    ln_norm: f64,
}

impl Pair {
    fn new(q: f64, sigma: f64) -> Self {
        Self {
            q,
            sigma,
            inv_two_var: 1.0 / (2.0 * sigma * sigma),
            ln_norm: -(sigma.ln() + LN_SQRT_2PI),
        }
    }

    fn ln_mu0(&self, z: f64) -> f64 {
        self.ln_norm - z * z * self.inv_two_var
    }

    /// `ln(nu(z) / mu0(z))`.
    fn log_ratio(&self, z: f64) -> f64 {
        let u = (2.0 * z - 1.0) * self.inv_two_var;
        if u > 30.0 {
            // q e^u dominates; avoid overflow of expm1.
            let rest = (1.0 - self.q) * (-u).exp();
            self.q.ln() + u + (rest / self.q).ln_1p()
        } else {
            (self.q * u.exp_m1()).ln_1p()
        }
    }

    /// `ln E_mu0[(mu0/nu)^lambda]`. Its log-integrand is concave, so a
    /// window around the peak captures all of the mass.
    fn moment_under_mu0(&self, quad: &Quadrature, lambda: u32) -> Result<f64> {
        let l = f64::from(lambda);
        let s = self.sigma;
        let peak = self.mu0_peak(l);
        let lo = (-WINDOW_SIGMAS * s).min(peak - WINDOW_SIGMAS * s);
        let hi = 1.0 + WINDOW_SIGMAS * s;
        let breaks = uniform_breaks(lo, hi, 2.0 * s);
        let ceiling = l * -(1.0 - self.q).ln();
        if ceiling <= SCALED_THRESHOLD {
            let excess = quad.integrate(
                |z| self.ln_mu0(z).exp() * (-l * self.log_ratio(z)).exp_m1(),
                &breaks,
            )?;
            Ok(excess.max(-0.5).ln_1p())
        } else {
            let shift = self.ln_mu0(peak) - l * self.log_ratio(peak);
            let scaled = quad.integrate(
                |z| (self.ln_mu0(z) - l * self.log_ratio(z) - shift).exp(),
                &breaks,
            )?;
            Ok(shift + scaled.ln())
        }
    }

    /// Maximiser of `ln mu0(z) - lambda ln(nu/mu0)(z)`, found by bisection
    /// on its (decreasing) derivative.
    fn mu0_peak(&self, l: f64) -> f64 {
        let slope = |z: f64| {
            let u = (2.0 * z - 1.0) * self.inv_two_var;
            let w = if u > 30.0 {
                1.0
            } else {
                let e = self.q * u.exp();
                e / (1.0 - self.q + e)
            };
            -z - l * w
        };
        let mut lo = -l * self.q / (1.0 - self.q) - 1.0;
        let mut hi = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if slope(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 * (1.0 + lo.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// `ln E_nu[(nu/mu0)^lambda] = ln E_mu0[(nu/mu0)^(lambda+1)]`.
    ///
    /// The integrand `mu0 (nu/mu0)^(lambda+1)` expands into a positive
    /// mixture of `Normal(k, sigma^2)` bumps, `k = 0..=lambda+1`; the
    /// mixture log-weights only pick the integration windows.
    fn moment_under_nu(&self, quad: &Quadrature, lambda: u32) -> Result<f64> {
        let l = f64::from(lambda);
        let s = self.sigma;
        let (windows, heaviest) = self.nu_windows(lambda + 1);
        let mut total = 0.0;
        if heaviest <= SCALED_THRESHOLD {
            for (a, b) in windows {
                total += quad.integrate(
                    |z| {
                        let r = self.log_ratio(z);
                        let base = self.ln_mu0(z) + r;
                        if l * r > 30.0 {
                            (base + l * r).exp() - base.exp()
                        } else {
                            base.exp() * (l * r).exp_m1()
                        }
                    },
                    &uniform_breaks(a, b, 2.0 * s),
                )?;
            }
            Ok(total.max(-0.5).ln_1p())
        } else {
            let shift = heaviest + self.ln_norm;
            for (a, b) in windows {
                total += quad.integrate(
                    |z| (self.ln_mu0(z) + (l + 1.0) * self.log_ratio(z) - shift).exp(),
                    &uniform_breaks(a, b, 2.0 * s),
                )?;
            }
            Ok(shift + total.ln())
        }
    }

    /// Merged windows around every non-negligible mixture bump (always
    /// including the bumps at 0 and 1 carried by `nu` itself) and the
    /// largest mixture log-weight.
    fn nu_windows(&self, n: u32) -> (Vec<(f64, f64)>, f64) {
        let ln_q = self.q.ln();
        let ln_p = (-self.q).ln_1p();
        let nf = f64::from(n);
        let mut ln_binom = 0.0;
        let mut weights = Vec::with_capacity(n as usize + 1);
        for k in 0..=n {
            let kf = f64::from(k);
            if k > 0 {
                ln_binom += ((nf - kf + 1.0) / kf).ln();
            }
            weights.push(ln_binom + kf * ln_q + (nf - kf) * ln_p + kf * (kf - 1.0) * self.inv_two_var);
        }
        let heaviest = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let half = WINDOW_SIGMAS * self.sigma;
        let mut windows: Vec<(f64, f64)> = vec![(-half, 1.0 + half)];
        for (k, &w) in weights.iter().enumerate() {
            if w < heaviest - MIXTURE_CUTOFF {
                continue;
            }
            let (a, b) = (k as f64 - half, k as f64 + half);
            let last = windows.last_mut().expect("seeded");
            if a <= last.1 {
                last.1 = last.1.max(b);
            } else {
                windows.push((a, b));
            }
        }
        (windows, heaviest)
    }
}
