//! DP-SGLD and DP-SGHMC chains.
//!
//! Each iteration draws a minibatch, clips every per-record log-likelihood
//! gradient to norm `L`, and forms
//! `G_t = grad log p(theta)/N + (1/tau) sum_J clip(g_i)`, where `tau` is the
//! expected batch size. Gradients are of the log density, so updates ascend
//! the posterior:
//!
//! * SGLD: `theta += eta_t G_t + z_t`
//! * SGHMC: `p = (1 - eta_t B) p + eta_t G_t + z_t`, then `theta += eta_t p`
//!
//! with `z_t ~ Normal(0, eta_t / N)` per coordinate. The released statistic
//! is a subsampled Gaussian mechanism with noise multiplier
//! [`sigma_effective`], which the chain's privacy meter composes over all
//! `T` iterations.

use std::io::Write;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::accountant::{compose_schedule, LambdaSet, PrivacySpend};
use crate::bounds::{check_conditions, sigma_effective, BoundInputs, StepSizeSchedule};
use crate::data::{draw_minibatch, Dataset, SamplingMode};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::rng::{Purpose, StreamKey};

fn norm(g: &[f64]) -> f64 {
    g.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Rescales `g` in place to norm at most `clip`; returns the original norm.
/// The rescaled norm never exceeds `clip` after rounding, so clipping twice
/// is the same as clipping once.
pub fn clip_in_place(g: &mut [f64], clip: f64) -> f64 {
    let original = norm(g);
    if original <= clip {
        return original;
    }
    let mut scale = clip / original;
    loop {
        g.iter_mut().for_each(|v| *v *= scale);
        if norm(g) <= clip {
            return original;
        }
        scale = 1.0 - f64::EPSILON;
    }
}

/// `g / max(1, ||g|| / clip)`.
pub fn clip_gradient(g: &[f64], clip: f64) -> Vec<f64> {
    let mut out = g.to_vec();
    clip_in_place(&mut out, clip);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    Sgld,
    /// Second-order dynamics with friction `B > 0`.
    Sghmc { friction: f64 },
}

/// Settings of one chain.
#[derive(Debug, Clone)]
pub struct SamplerConfig {
    /// Clipping norm `L`; `f64::INFINITY` disables clipping.
    pub clip: f64,
    pub sampling: SamplingMode,
    /// Iterations `T`.
    pub iterations: u64,
    pub burn_in: u64,
    pub schedule: StepSizeSchedule,
    pub dynamics: Dynamics,
    /// Multiplier on the injected noise standard deviation. 1 is the
    /// calibrated mechanism, 0 switches noise off (test mode).
    pub noise_scale: f64,
    /// `delta` at which the privacy meter reports epsilon.
    pub delta: f64,
    pub lambdas: LambdaSet,
    pub seed: u64,
    pub chain: u64,
    /// Starting point; zeros when `None`.
    pub init: Option<Vec<f64>>,
}

impl SamplerConfig {
    /// Poisson-sampled SGLD with clipping norm 1, burn-in `T/10`,
    /// `delta = 1e-5` and seed 0.
    pub fn new(q: f64, iterations: u64, schedule: StepSizeSchedule) -> Self {
        Self {
            clip: 1.0,
            sampling: SamplingMode::Poisson { q },
            iterations,
            burn_in: iterations / 10,
            schedule,
            dynamics: Dynamics::Sgld,
            noise_scale: 1.0,
            delta: 1e-5,
            lambdas: LambdaSet::from_env(),
            seed: 0,
            chain: 0,
            init: None,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.clip > 0.0) {
            return bad(format!("clipping norm must be positive, got {}", self.clip));
        }
        match self.sampling {
            SamplingMode::Poisson { q } if !(q > 0.0 && q <= 1.0) => {
                return bad(format!("q must be in (0, 1], got {q}"))
            }
            SamplingMode::FixedSize { tau } if tau == 0 || tau > n => {
                return bad(format!("batch size must be in 1..={n}, got {tau}"))
            }
            _ => {}
        }
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return bad(format!(
                "need 0 <= burn_in < T (burn_in={}, T={})",
                self.burn_in, self.iterations
            ));
        }
        if let Dynamics::Sghmc { friction } = self.dynamics {
            if !(friction >= 0.0 && friction.is_finite()) {
                return bad(format!("friction must be non-negative, got {friction}"));
            }
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad(format!("noise scale must be non-negative, got {}", self.noise_scale));
        }
        if n == 0 {
            return Err(Error::EmptySet);
        }
        self.schedule.validate()
    }

    /// Expected minibatch size.
    pub fn tau(&self, n: usize) -> f64 {
        match self.sampling {
            SamplingMode::Poisson { q } => q * n as f64,
            SamplingMode::FixedSize { tau } => tau as f64,
        }
    }

    /// Sampling probability, as seen by the accountant.
    pub fn q(&self, n: usize) -> f64 {
        self.tau(n) / n as f64
    }
}

/// Position of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub theta: Vec<f64>,
    /// Present iff the dynamics is SGHMC.
    pub momentum: Option<Vec<f64>>,
    /// Index of the next iteration (starts at 1).
    pub t: u64,
    pub key: StreamKey,
}

impl ChainState {
    pub fn new(theta: Vec<f64>, dynamics: Dynamics, key: StreamKey) -> Self {
        let momentum = match dynamics {
            Dynamics::Sgld => None,
            Dynamics::Sghmc { .. } => Some(vec![0.0; theta.len()]),
        };
        Self {
            theta,
            momentum,
            t: 1,
            key,
        }
    }

    pub fn initial(model: &dyn Model, config: &SamplerConfig) -> Result<Self> {
        let theta = config.init.clone().unwrap_or_else(|| vec![0.0; model.dimension()]);
        model.check_theta(&theta)?;
        Ok(Self::new(theta, config.dynamics, StreamKey::new(config.seed, config.chain)))
    }
}

/// Scratch buffers reused across iterations.
#[derive(Debug, Default)]
struct Workspace {
    batch: Vec<usize>,
    grad: Vec<f64>,
    drift: Vec<f64>,
}

/// Adds `sum_{i in batch} clip(g_i)` into `out`, using `grad` as scratch.
fn accumulate_clipped(
    model: &dyn Model,
    data: &Dataset,
    clip: f64,
    theta: &[f64],
    batch: &[usize],
    grad: &mut Vec<f64>,
    out: &mut [f64],
) {
    grad.resize(theta.len(), 0.0);
    for &i in batch {
        model.loglik_grad(theta, data.record(i), grad);
        if clip.is_finite() {
            clip_in_place(grad, clip);
        }
        for (d, g) in out.iter_mut().zip(grad.iter()) {
            *d += g;
        }
    }
}

/// Sum of clipped per-record gradients over `batch`, the data-dependent
/// part of every released statistic.
pub fn clipped_gradient_sum(model: &dyn Model, data: &Dataset, clip: f64, theta: &[f64], batch: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; theta.len()];
    accumulate_clipped(model, data, clip, theta, batch, &mut Vec::new(), &mut out);
    out
}

/// Writes `G_t` into `ws.drift`.
fn drift(model: &dyn Model, data: &Dataset, config: &SamplerConfig, state: &ChainState, ws: &mut Workspace) {
    let n = data.len() as f64;
    let mut rng = state.key.stream(state.t, Purpose::Batch);
    draw_minibatch(data.len(), config.sampling, &mut rng, &mut ws.batch);
    ws.drift.clear();
    ws.drift.resize(state.theta.len(), 0.0);
    accumulate_clipped(model, data, config.clip, &state.theta, &ws.batch, &mut ws.grad, &mut ws.drift);
    let tau = config.tau(data.len());
    model.log_prior_grad(&state.theta, &mut ws.grad);
    for (d, p) in ws.drift.iter_mut().zip(&ws.grad) {
        *d = *d / tau + p / n;
    }
}

fn check_step(model: &dyn Model, data: &Dataset, state: &ChainState) -> Result<()> {
    model.check_theta(&state.theta)?;
    if data.width() != model.record_width() {
        return Err(Error::DimensionMismatch {
            expected: model.record_width(),
            got: data.width(),
        });
    }
    if let Some(theta) = state.theta.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite parameter {theta}")));
    }
    Ok(())
}

fn step_in_place(
    model: &dyn Model,
    data: &Dataset,
    config: &SamplerConfig,
    state: &mut ChainState,
    ws: &mut Workspace,
) -> Result<()> {
    let eta = config.schedule.eta(state.t);
    drift(model, data, config, state, ws);
    let sd = config.noise_scale * (eta / data.len() as f64).sqrt();
    let mut noise = state.key.stream(state.t, Purpose::Noise);
    let mut z = || -> f64 {
        if sd == 0.0 {
            0.0
        } else {
            sd * Distribution::<f64>::sample(&StandardNormal, &mut noise)
        }
    };
    match (config.dynamics, state.momentum.as_mut()) {
        (Dynamics::Sgld, None) => {
            for (th, g) in state.theta.iter_mut().zip(&ws.drift) {
                *th += eta * g + z();
            }
        }
        (Dynamics::Sghmc { friction }, Some(p)) => {
            for ((th, pk), g) in state.theta.iter_mut().zip(p.iter_mut()).zip(&ws.drift) {
                *pk = (1.0 - eta * friction) * *pk + eta * g + z();
                *th += eta * *pk;
            }
        }
        _ => {
            return Err(Error::InvalidArgument(
                "momentum must be present exactly for SGHMC".into(),
            ))
        }
    }
    state.t += 1;
    Ok(())
}

/// One SGLD iteration from `state`.
pub fn sgld_step(model: &dyn Model, data: &Dataset, config: &SamplerConfig, state: &ChainState) -> Result<ChainState> {
    if state.momentum.is_some() || config.dynamics != Dynamics::Sgld {
        return Err(Error::InvalidArgument("sgld_step needs SGLD dynamics and no momentum".into()));
    }
    step(model, data, config, state)
}

/// One SGHMC iteration from `state`.
pub fn sghmc_step(model: &dyn Model, data: &Dataset, config: &SamplerConfig, state: &ChainState) -> Result<ChainState> {
    if state.momentum.is_none() || !matches!(config.dynamics, Dynamics::Sghmc { .. }) {
        return Err(Error::InvalidArgument("sghmc_step needs SGHMC dynamics and momentum".into()));
    }
    step(model, data, config, state)
}

fn step(model: &dyn Model, data: &Dataset, config: &SamplerConfig, state: &ChainState) -> Result<ChainState> {
    config.validate(data.len())?;
    check_step(model, data, state)?;
    let mut next = state.clone();
    step_in_place(model, data, config, &mut next, &mut Workspace::default())?;
    Ok(next)
}

/// One post-burn-in draw `theta_{t+1}` with its step size `eta_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: u64,
    pub eta: f64,
    pub theta: Vec<f64>,
}

/// Privacy meter output of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyReport {
    /// Certified spend, or `None` when certification is unavailable.
    pub spend: Option<PrivacySpend>,
    /// Order attaining the tail-bound minimum.
    pub lambda: Option<u32>,
    /// Why certification is unavailable.
    pub reason: Option<String>,
    /// Noise multipliers of the released statistics.
    pub sigmas: Vec<f64>,
}

impl PrivacyReport {
    pub fn is_certified(&self) -> bool {
        self.spend.is_some()
    }

    fn uncertified(reason: String) -> Self {
        Self {
            spend: None,
            lambda: None,
            reason: Some(reason),
            sigmas: Vec::new(),
        }
    }
}

/// Certified `(epsilon, delta)` of running `config` on `n` records: the
/// `T` noise multipliers `sigma_effective(eta_t)` (times the noise scale)
/// composed through the accountant.
pub fn certify(config: &SamplerConfig, n: usize) -> Result<PrivacyReport> {
    config.validate(n)?;
    let q = match config.sampling {
        SamplingMode::FixedSize { .. } => {
            return Ok(PrivacyReport::uncertified(
                "fixed-size batches do not match the accountant's Poisson sampling".into(),
            ))
        }
        SamplingMode::Poisson { q } => q,
    };
    if !config.clip.is_finite() {
        return Ok(PrivacyReport::uncertified("clipping is disabled".into()));
    }
    if config.noise_scale < 1.0 {
        return Ok(PrivacyReport::uncertified(format!(
            "noise scaled down by {}",
            config.noise_scale
        )));
    }
    if q >= 1.0 {
        return Ok(PrivacyReport::uncertified("q = 1 gives no amplification".into()));
    }
    let inputs = BoundInputs {
        n: n as u64,
        t: config.iterations,
        epsilon: f64::INFINITY,
        delta: config.delta,
        clip: config.clip / config.noise_scale,
        q,
    };
    let report = check_conditions(&config.schedule, &inputs);
    if !report.operative_pass() {
        return Ok(PrivacyReport::uncertified(report.failures().join("; ")));
    }
    let sigmas: Vec<f64> = (1..=config.iterations)
        .map(|t| sigma_effective(config.schedule.eta(t), &inputs))
        .collect();
    let ledger = compose_schedule(q, &sigmas, &config.lambdas)?;
    let tail = ledger.epsilon_for(config.delta);
    Ok(PrivacyReport {
        spend: Some(PrivacySpend {
            epsilon: tail.value,
            delta: config.delta,
        }),
        lambda: Some(tail.lambda),
        reason: None,
        sigmas,
    })
}

/// Completed chain.
#[derive(Debug, Clone)]
pub struct ChainRun {
    pub samples: Vec<Sample>,
    pub privacy: PrivacyReport,
    pub final_state: ChainState,
}

/// Runs `T` iterations, passing every post-burn-in sample to `emit`.
pub fn run_chain_with<F: FnMut(Sample)>(
    model: &dyn Model,
    data: &Dataset,
    config: &SamplerConfig,
    mut emit: F,
) -> Result<ChainState> {
    config.validate(data.len())?;
    let mut state = ChainState::initial(model, config)?;
    check_step(model, data, &state)?;
    let mut ws = Workspace::default();
    for _ in 0..config.iterations {
        let t = state.t;
        step_in_place(model, data, config, &mut state, &mut ws)?;
        if state.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("chain diverged at iteration {t}")));
        }
        if t > config.burn_in {
            emit(Sample {
                t,
                eta: config.schedule.eta(t),
                theta: state.theta.clone(),
            });
        }
    }
    Ok(state)
}

/// Runs a chain without accounting.
pub fn run_chain_uncertified(model: &dyn Model, data: &Dataset, config: &SamplerConfig) -> Result<(Vec<Sample>, ChainState)> {
    let mut samples = Vec::with_capacity((config.iterations - config.burn_in.min(config.iterations)) as usize);
    let state = run_chain_with(model, data, config, |s| samples.push(s))?;
    Ok((samples, state))
}

/// Runs a chain and meters its privacy spend.
pub fn run_chain(model: &dyn Model, data: &Dataset, config: &SamplerConfig) -> Result<ChainRun> {
    let (samples, final_state) = run_chain_uncertified(model, data, config)?;
    let privacy = certify(config, data.len())?;
    Ok(ChainRun {
        samples,
        privacy,
        final_state,
    })
}

/// Writes samples as CSV with columns `t, eta_t, theta_0..theta_{r-1}`.
pub fn write_samples_csv<W: Write>(out: W, samples: &[Sample], dimension: usize) -> Result<()> {
    let mut w = std::io::BufWriter::new(out);
    let mut header = vec!["t".to_string(), "eta_t".to_string()];
    header.extend((0..dimension).map(|j| format!("theta_{j}")));
    writeln!(w, "{}", header.join(","))?;
    for s in samples {
        write!(w, "{},{}", s.t, s.eta)?;
        for v in &s.theta {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}
