//! `dpsgmcmc` command-line tool.
//!
//! Exit codes: 0 on success, 2 for invalid input or an infeasible budget,
//! 1 for anything else (I/O, data errors).

// `!(x > 0.0)` style checks are intentional: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use dpsgmcmc::accountant::{compose_schedule, LambdaSet, MomentsLedger};
use dpsgmcmc::bounds::{
    check_conditions, sigma_effective, step_bound_decreasing, step_bound_fixed, step_bound_wang, BoundInputs,
    StepConditions, StepSizeSchedule,
};
use dpsgmcmc::data::{load_adult, load_adult_split, synthetic_gaussian, synthetic_logistic, Dataset, SamplingMode};
use dpsgmcmc::eval::{default_q, figure_sweeps, Fig1Config, Fig2Config, Fig3Config, FigureSweep, Table};
use dpsgmcmc::models::{GaussianMeanModel, LogisticRegression, Model};
use dpsgmcmc::sampler::{run_chain, write_samples_csv, Dynamics, SamplerConfig};

use config::{Command, ConfigError, DynamicsKind, Figure, ModelKind, RunConfig, Sampling, Schedule};

#[derive(Debug, thiserror::Error)]
enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Lib(#[from] dpsgmcmc::Error),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

impl AppError {
    fn exit_code(&self) -> u8 {
        use dpsgmcmc::Error as E;
        match self {
            AppError::Config(ConfigError::Missing(_)) | AppError::Config(ConfigError::Json { .. }) => 2,
            AppError::Lib(
                E::InfeasibleBudget(_) | E::Validity(_) | E::InvalidArgument(_) | E::DimensionMismatch { .. },
            ) => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, AppError>;

fn main() -> ExitCode {
    let run = || -> Result<()> {
        let cfg = RunConfig::parse().resolve()?;
        let command = cfg
            .command
            .ok_or_else(|| ConfigError::Missing("no command given (account, bound, sample or experiment)".into()))?;
        cfg.write_sidecar()?;
        let stdout = io::stdout();
        let mut out = stdout.lock();
        match command {
            Command::Account => account(&cfg, &mut out),
            Command::Bound => bound(&cfg, &mut out),
            Command::Sample => sample(&cfg, &mut out),
            Command::Experiment => experiment(&cfg, &mut out),
        }
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn invalid(message: String) -> AppError {
    AppError::Lib(dpsgmcmc::Error::InvalidArgument(message))
}

/// `q` from `--q`, or `--tau / --n`.
fn sampling_probability(cfg: &RunConfig, n: Option<u64>) -> Result<Option<f64>> {
    match (cfg.q, cfg.tau, n) {
        (Some(q), _, _) => Ok(Some(q)),
        (None, Some(tau), Some(n)) => Ok(Some(tau as f64 / n as f64)),
        (None, Some(_), None) => Err(invalid("--tau needs --n".into())),
        _ => Ok(None),
    }
}

fn step_schedule(kind: Schedule, eta0: f64) -> StepSizeSchedule {
    match kind {
        Schedule::Fixed => StepSizeSchedule::fixed(eta0),
        Schedule::Power => StepSizeSchedule::power_decay(eta0),
    }
}

fn account(cfg: &RunConfig, out: &mut impl Write) -> Result<()> {
    let t = cfg.require(cfg.t, "t")?;
    let q = sampling_probability(cfg, cfg.n)?.ok_or_else(|| ConfigError::Missing("--q or --tau is required".into()))?;
    let sigmas: Vec<f64> = if let Some(sigma) = cfg.sigma {
        let mut broken = Vec::new();
        if !(sigma >= 1.0) {
            broken.push(format!("sigma >= 1 fails (sigma = {sigma})"));
        }
        if !(q < 1.0 / 16.0) {
            broken.push(format!("q < 1/16 fails (q = {q})"));
        }
        if !broken.is_empty() {
            return Err(dpsgmcmc::Error::Validity(broken.join("; ")).into());
        }
        vec![sigma; t as usize]
    } else {
        let eta0 = cfg.require(cfg.eta0, "eta0 (or --sigma)")?;
        let inputs = BoundInputs {
            n: cfg.require(cfg.n, "n")?,
            t,
            epsilon: f64::INFINITY,
            delta: cfg.delta.unwrap_or(1e-5),
            clip: cfg.clip_l.unwrap_or(1.0),
            q,
        };
        let schedule = step_schedule(cfg.schedule.unwrap_or(Schedule::Power), eta0);
        schedule.validate()?;
        let report = check_conditions(&schedule, &inputs);
        if !report.operative_pass() {
            return Err(dpsgmcmc::Error::Validity(report.failures().join("; ")).into());
        }
        (1..=t).map(|i| sigma_effective(schedule.eta(i), &inputs)).collect()
    };
    let ledger: MomentsLedger = compose_schedule(q, &sigmas, &LambdaSet::from_env())?;
    match (cfg.epsilon, cfg.delta) {
        (Some(eps), None) => {
            let tail = ledger.delta_for(eps);
            writeln!(out, "epsilon={eps:?}\ndelta={:?}\nlambda={}", tail.value, tail.lambda)?;
        }
        (_, delta) => {
            let delta = delta.unwrap_or(1e-5);
            let tail = ledger.epsilon_for(delta);
            writeln!(out, "epsilon={:?}\ndelta={delta:?}\nlambda={}", tail.value, tail.lambda)?;
        }
    }
    writeln!(out, "steps={}\nq={q:?}", ledger.steps_composed())?;
    Ok(())
}

fn write_conditions(out: &mut impl Write, c: &StepConditions) -> io::Result<()> {
    writeln!(
        out,
        "t={} eta={:?} sigma={:?} sigma_at_least_one={} q_below_inverse_16_sigma={} dominated_by_valid_step={} literal_upper={} literal_lower={}",
        c.t,
        c.eta,
        c.sigma,
        c.sigma_at_least_one,
        c.q_below_inverse_16_sigma,
        c.dominated_by_valid_step,
        c.literal_upper,
        c.literal_lower
    )
}

fn bound(cfg: &RunConfig, out: &mut impl Write) -> Result<()> {
    let n = cfg.require(cfg.n, "n")?;
    let inputs = BoundInputs {
        n,
        t: cfg.require(cfg.t, "t")?,
        epsilon: cfg.require(cfg.epsilon, "epsilon")?,
        delta: cfg.delta.unwrap_or(1e-5),
        clip: cfg.clip_l.unwrap_or(1.0),
        q: sampling_probability(cfg, Some(n))?.unwrap_or_else(|| default_q(n)),
    };
    let kind = cfg.schedule.unwrap_or(Schedule::Power);
    let b = match kind {
        Schedule::Power => step_bound_decreasing(&inputs)?,
        Schedule::Fixed => step_bound_fixed(&inputs)?,
    };
    let report = check_conditions(&b.schedule(), &inputs);
    writeln!(out, "schedule={}", if kind == Schedule::Power { "power" } else { "fixed" })?;
    writeln!(out, "eta1={:?}\nexponent={:?}\nsigma1={:?}\ncertified_delta={:?}", b.eta1, b.exponent, b.sigma1, b.delta)?;
    writeln!(out, "eta_wang={:?}", step_bound_wang(&inputs))?;
    write_conditions(out, &report.first)?;
    write_conditions(out, &report.last)?;
    writeln!(out, "operative={}", if report.operative_pass() { "pass" } else { "fail" })?;
    Ok(())
}

fn is_adult(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "data" || e == "test")
}

fn load_dataset(cfg: &RunConfig, model: ModelKind) -> Result<Dataset> {
    let seed = cfg.seed.unwrap_or(0);
    if let Some(path) = &cfg.data {
        return Ok(if is_adult(path) { load_adult(path)? } else { Dataset::load_csv(path)? });
    }
    let n = cfg.n.unwrap_or(1000) as usize;
    Ok(match model {
        ModelKind::Gaussian => synthetic_gaussian(n, 1.0, 1.0, seed),
        ModelKind::Logistic => synthetic_logistic(n, cfg.features.unwrap_or(5), seed),
    })
}

fn sample(cfg: &RunConfig, out: &mut impl Write) -> Result<()> {
    let kind = cfg.model.unwrap_or(ModelKind::Gaussian);
    let data = load_dataset(cfg, kind)?;
    let model: Box<dyn Model> = match kind {
        ModelKind::Gaussian => Box::new(GaussianMeanModel::default()),
        ModelKind::Logistic => Box::new(LogisticRegression::new(data.width())),
    };
    if model.record_width() != data.width() {
        return Err(dpsgmcmc::Error::DimensionMismatch {
            expected: model.record_width(),
            got: data.width(),
        }
        .into());
    }
    let n = data.len();
    let t = cfg.require(cfg.t, "t")?;
    let q = sampling_probability(cfg, Some(n as u64))?.unwrap_or_else(|| default_q(n as u64));
    let schedule = step_schedule(cfg.schedule.unwrap_or(Schedule::Power), cfg.require(cfg.eta0, "eta0")?);
    let mut sc = SamplerConfig::new(q, t, schedule);
    if cfg.sampling == Some(Sampling::Fixed) {
        sc.sampling = SamplingMode::FixedSize {
            tau: cfg.tau.map_or_else(|| (q * n as f64).round() as usize, |t| t as usize),
        };
    }
    sc.clip = cfg.clip_l.unwrap_or(1.0);
    sc.burn_in = cfg.burn_in.unwrap_or(t / 10);
    sc.delta = cfg.delta.unwrap_or(1e-5);
    sc.seed = cfg.seed.unwrap_or(0);
    if cfg.dynamics == Some(DynamicsKind::Sghmc) {
        sc.dynamics = Dynamics::Sghmc {
            friction: cfg.friction.unwrap_or(1.0),
        };
    }
    let run = run_chain(model.as_ref(), &data, &sc)?;
    let dim = model.dimension();
    let privacy = match (&run.privacy.spend, run.privacy.lambda) {
        (Some(s), Some(l)) => format!("certified epsilon={:?} delta={:?} lambda={l}", s.epsilon, s.delta),
        _ => format!("uncertified: {}", run.privacy.reason.as_deref().unwrap_or("unknown")),
    };
    match &cfg.out {
        Some(path) => {
            write_samples_csv(BufWriter::new(File::create(path)?), &run.samples, dim)?;
            writeln!(out, "samples={}\n{privacy}", run.samples.len())?;
        }
        None => {
            write_samples_csv(&mut *out, &run.samples, dim)?;
            eprintln!("{privacy}");
        }
    }
    Ok(())
}

fn fig3_config(cfg: &RunConfig) -> Result<Fig3Config> {
    let seed = cfg.seed.unwrap_or(0);
    let (train, test) = match &cfg.data {
        Some(path) if is_adult(path) => load_adult_split(path, cfg.test_data.as_deref(), seed)?,
        Some(path) => {
            return Err(invalid(format!(
                "fig3 expects the Adult training file (*.data), got {}",
                path.display()
            )))
        }
        None => {
            // Synthetic surrogate: 2:1 train/test split.
            let n = cfg.n.unwrap_or(15_000) as usize;
            let all = synthetic_logistic(n, cfg.features.unwrap_or(14), seed);
            let idx: Vec<usize> = (0..n).collect();
            let cut = (2 * n).div_ceil(3);
            (all.subset(&idx[..cut]), all.subset(&idx[cut..]))
        }
    };
    let mut f = Fig3Config::new(train, test);
    f.seed = seed;
    if let Some(eps) = cfg.epsilon {
        f.epsilons = vec![eps];
    }
    f.delta = cfg.delta.unwrap_or(f.delta);
    f.iterations = cfg.t.unwrap_or(f.iterations);
    f.default_eta0 = cfg.eta0.unwrap_or(f.default_eta0);
    f.clip = cfg.clip_l.unwrap_or(f.clip);
    f.repeats = cfg.repeats.unwrap_or(f.repeats);
    Ok(f)
}

fn experiment(cfg: &RunConfig, out: &mut impl Write) -> Result<()> {
    let sweep = match cfg.require(cfg.figure, "figure")? {
        Figure::Fig1 => {
            let d = Fig1Config::default();
            let mut f = Fig1Config {
                n: cfg.n.unwrap_or(d.n),
                t: cfg.t.unwrap_or(d.t),
                delta: cfg.delta.unwrap_or(d.delta),
                clip: cfg.clip_l.unwrap_or(d.clip),
                epsilons: d.epsilons,
            };
            if let Some(eps) = cfg.epsilon {
                f.epsilons = vec![eps];
            }
            FigureSweep::Fig1(f)
        }
        Figure::Fig2 => {
            let d = Fig2Config::default();
            FigureSweep::Fig2(Fig2Config {
                epsilon: cfg.epsilon.unwrap_or(d.epsilon),
                ..d
            })
        }
        Figure::Fig3 => FigureSweep::Fig3(Box::new(fig3_config(cfg)?)),
    };
    let table: Table = figure_sweeps(&sweep)?;
    match &cfg.out {
        Some(path) => {
            table.write_csv(BufWriter::new(File::create(path)?))?;
            writeln!(out, "rows={}", table.rows.len())?;
        }
        None => table.write_csv(&mut *out)?,
    }
    Ok(())
}
