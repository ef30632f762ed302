//! Differentiable Bayesian models.
//!
//! The sampler needs the prior gradient and per-record log-likelihood
//! gradients; the scalar log densities are exposed too so gradients can be
//! checked against finite differences.

use crate::data::Record;
use crate::error::{Error, Result};

/// Interface consumed by the sampler. Gradients are written into `out`,
/// which has length [`Model::dimension`].
pub trait Model: Send + Sync {
    fn dimension(&self) -> usize;

    /// Number of feature columns a record must carry.
    fn record_width(&self) -> usize;

    fn log_prior(&self, theta: &[f64]) -> f64;

    fn log_prior_grad(&self, theta: &[f64], out: &mut [f64]);

    fn loglik(&self, theta: &[f64], record: Record<'_>) -> f64;

    fn loglik_grad(&self, theta: &[f64], record: Record<'_>, out: &mut [f64]);

    /// Probability of label 1, for classification models.
    fn predict(&self, _theta: &[f64], _x: &[f64]) -> Option<f64> {
        None
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: theta.len(),
            });
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-record log-likelihood gradient of logistic regression,
/// `(y - sigmoid(theta . x)) x`.
pub fn logistic_grad(theta: &[f64], x: &[f64], y: f64) -> Result<Vec<f64>> {
    if theta.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: x.len(),
        });
    }
    let r = y - sigmoid(dot(theta, x));
    Ok(x.iter().map(|v| r * v).collect())
}

/// Gradient of the `Normal(0, s2 I)` log density, `-theta / s2`.
pub fn gaussian_prior_grad(theta: &[f64], s2: f64) -> Vec<f64> {
    theta.iter().map(|t| -t / s2).collect()
}

/// Gradient of `ln Normal(x; theta, obs_variance)` in `theta`.
pub fn gaussian_mean_grad(theta: f64, x: f64, obs_variance: f64) -> f64 {
    (x - theta) / obs_variance
}

/// Bayesian logistic regression with a `Normal(0, prior_variance I)` prior.
/// With `bias`, a constant-1 feature is appended, so the last coordinate of
/// `theta` is the intercept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticRegression {
    pub features: usize,
    pub bias: bool,
    pub prior_variance: f64,
}

impl LogisticRegression {
    pub fn new(features: usize) -> Self {
        Self {
            features,
            bias: true,
            prior_variance: 1.0,
        }
    }

    fn logit(&self, theta: &[f64], x: &[f64]) -> f64 {
        let z = dot(&theta[..self.features], x);
        if self.bias {
            z + theta[self.features]
        } else {
            z
        }
    }
}

impl Model for LogisticRegression {
    fn dimension(&self) -> usize {
        self.features + usize::from(self.bias)
    }

    fn record_width(&self) -> usize {
        self.features
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        -0.5 * dot(theta, theta) / self.prior_variance
    }

    fn log_prior_grad(&self, theta: &[f64], out: &mut [f64]) {
        for (o, t) in out.iter_mut().zip(theta) {
            *o = -t / self.prior_variance;
        }
    }

    fn loglik(&self, theta: &[f64], record: Record<'_>) -> f64 {
        let z = self.logit(theta, record.x);
        record.y * z - softplus(z)
    }

    fn loglik_grad(&self, theta: &[f64], record: Record<'_>, out: &mut [f64]) {
        let r = record.y - sigmoid(self.logit(theta, record.x));
        for (o, x) in out.iter_mut().zip(record.x) {
            *o = r * x;
        }
        if self.bias {
            out[self.features] = r;
        }
    }

    fn predict(&self, theta: &[f64], x: &[f64]) -> Option<f64> {
        Some(sigmoid(self.logit(theta, x)))
    }
}

/// One-dimensional Gaussian mean with known observation variance and a
/// `Normal(0, prior_variance)` prior. Observations are record labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMeanModel {
    pub prior_variance: f64,
    pub obs_variance: f64,
}

impl Default for GaussianMeanModel {
    fn default() -> Self {
        Self {
            prior_variance: 1.0,
            obs_variance: 1.0,
        }
    }
}

impl GaussianMeanModel {
    /// Conjugate posterior `(mean, variance)` given observations `xs`.
    pub fn posterior(&self, xs: &[f64]) -> (f64, f64) {
        let precision = 1.0 / self.prior_variance + xs.len() as f64 / self.obs_variance;
        let sum: f64 = xs.iter().sum();
        (sum / self.obs_variance / precision, 1.0 / precision)
    }
}

impl Model for GaussianMeanModel {
    fn dimension(&self) -> usize {
        1
    }

    fn record_width(&self) -> usize {
        0
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        -0.5 * theta[0] * theta[0] / self.prior_variance
    }

    fn log_prior_grad(&self, theta: &[f64], out: &mut [f64]) {
        out[0] = -theta[0] / self.prior_variance;
    }

    fn loglik(&self, theta: &[f64], record: Record<'_>) -> f64 {
        let d = record.y - theta[0];
        -0.5 * d * d / self.obs_variance
    }

    fn loglik_grad(&self, theta: &[f64], record: Record<'_>, out: &mut [f64]) {
        out[0] = gaussian_mean_grad(theta[0], record.y, self.obs_variance);
    }
}
