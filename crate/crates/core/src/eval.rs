//! Utility measurements and experiment sweeps.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bounds::{
    step_bound_decreasing, step_bound_fixed, step_bound_wang, BoundInputs, ScheduleKind, StepSizeSchedule,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{GaussianMeanModel, LogisticRegression, Model};
use crate::par;
use crate::sampler::{certify, run_chain_uncertified, Sample, SamplerConfig};

/// Samples with their step-size weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSampleSet {
    samples: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl WeightedSampleSet {
    pub fn new(samples: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if samples.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: samples.len(),
                got: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument(format!("weights must be positive, got {w}")));
        }
        Ok(Self { samples, weights })
    }

    /// Weights each chain sample by its step size.
    pub fn from_chain(samples: &[Sample]) -> Result<Self> {
        Self::new(
            samples.iter().map(|s| s.theta.clone()).collect(),
            samples.iter().map(|s| s.eta).collect(),
        )
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// `sum_t eta_t phi(theta_t) / sum_t eta_t`.
pub fn posterior_average<F: Fn(&[f64]) -> f64>(set: &WeightedSampleSet, phi: F) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let (num, den) = set
        .samples
        .iter()
        .zip(&set.weights)
        .fold((0.0, 0.0), |(n, d), (s, w)| (n + w * phi(s), d + w));
    Ok(num / den)
}

/// Inputs of the MSE bound expressions. `gamma_m` and `c` are opaque
/// model-dependent constants, so only the shape of the result is meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseBoundShape {
    /// `eta~_0` for the decreasing schedule, the step size `eta` for the
    /// fixed one.
    pub eta_tilde0: f64,
    pub t: f64,
    pub n: f64,
    pub tau: f64,
    pub gamma_m: f64,
    pub c: f64,
}

impl MseBoundShape {
    pub fn new(eta_tilde0: f64, t: f64, n: f64, tau: f64) -> Self {
        Self {
            eta_tilde0,
            t,
            n,
            tau,
            gamma_m: 1.0,
            c: 1.0,
        }
    }

    /// The three terms inside the bound, before scaling by `c`.
    pub fn terms(&self, kind: ScheduleKind) -> [f64; 3] {
        let Self {
            eta_tilde0: e,
            t,
            n,
            tau,
            gamma_m,
            ..
        } = *self;
        let batch = (n / tau - 1.0) * n * n * gamma_m / t;
        match kind {
            ScheduleKind::PowerDecay => [2.0 / 3.0 * batch, 1.0 / (3.0 * e), 2.0 * e * e * t.powf(-2.0 / 3.0)],
            ScheduleKind::Fixed => [batch, 1.0 / (t * e), e * e],
        }
    }
}

/// Decreasing: `C (2/3 (N/tau - 1) N^2 Gamma / T + 1/(3 eta~0) + 2 eta~0^2 T^(-2/3))`.
/// Fixed: `C ((N/tau - 1) N^2 Gamma / T + 1/(T eta) + eta^2)`.
pub fn mse_bound_shape(shape: &MseBoundShape, kind: ScheduleKind) -> f64 {
    shape.c * shape.terms(kind).iter().sum::<f64>()
}

/// One row of an MSE table.
#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub iterations: u64,
    pub eta0: f64,
    pub mse: f64,
    pub std_err: f64,
    pub repetitions: usize,
}

/// For each configuration, runs `repetitions` chains (chain ids
/// `0..repetitions`) of the Gaussian mean model on `data` and measures
/// `(phi_hat - posterior mean)^2` with `phi(theta) = theta`.
pub fn mse_experiment(
    model: &GaussianMeanModel,
    data: &Dataset,
    grid: &[SamplerConfig],
    repetitions: usize,
) -> Result<Vec<MseRow>> {
    if repetitions == 0 {
        return Err(Error::InvalidArgument("need at least one repetition".into()));
    }
    let (target, _) = model.posterior(data.labels());
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..repetitions).map(move |r| (g, r)))
        .collect();
    let errors = par::try_map(&jobs, |&(g, r)| -> Result<f64> {
        let mut cfg = grid[g].clone();
        cfg.chain = r as u64;
        let (samples, _) = run_chain_uncertified(model, data, &cfg)?;
        let est = posterior_average(&WeightedSampleSet::from_chain(&samples)?, |th| th[0])?;
        Ok((est - target).powi(2))
    })?;
    Ok(grid
        .iter()
        .zip(errors.chunks(repetitions))
        .map(|(cfg, sq)| {
            let (mean, se) = mean_and_se(sq);
            MseRow {
                iterations: cfg.iterations,
                eta0: cfg.schedule.eta0,
                mse: mean,
                std_err: se,
                repetitions,
            }
        })
        .collect())
}

/// Sample mean and its standard error.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let (mean, sd) = mean_and_sd(xs);
    (mean, sd / (xs.len() as f64).sqrt())
}

/// Sample mean and standard deviation (divisor `n - 1`).
pub fn mean_and_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Posterior-predictive accuracy: the label-1 probability is averaged
/// over `samples`, and probability `>= 0.5` predicts 1.
pub fn accuracy(model: &dyn Model, samples: &[Vec<f64>], test: &Dataset) -> Result<f64> {
    if samples.is_empty() || test.is_empty() {
        return Err(Error::EmptySet);
    }
    for s in samples {
        model.check_theta(s)?;
    }
    let mut correct = 0usize;
    for i in 0..test.len() {
        let mut p = 0.0;
        for s in samples {
            p += model
                .predict(s, test.row(i))
                .ok_or_else(|| Error::InvalidArgument("model does not predict labels".into()))?;
        }
        let label = f64::from(u8::from(p / samples.len() as f64 >= 0.5));
        if label == test.labels()[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Numeric table rendered as CSV with shortest round-trip decimals.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = std::io::BufWriter::new(out);
        writeln!(w, "{}", self.header.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `ceil(sqrt(N)) / N`, the sampling probability used in the sweeps.
pub fn default_q(n: u64) -> f64 {
    (n as f64).sqrt().ceil() / n as f64
}

/// Bound comparison over a privacy-loss grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig1Config {
    pub n: u64,
    pub t: u64,
    pub delta: f64,
    pub clip: f64,
    pub epsilons: Vec<f64>,
}

impl Default for Fig1Config {
    fn default() -> Self {
        Self {
            n: 50_000,
            t: 10_000,
            delta: 1e-5,
            clip: 1.0,
            epsilons: vec![0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0, 1.3, 1.7],
        }
    }
}

/// Bounds across data sizes (`T = N`, `delta = 1/N`) and clipping norms.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig2Config {
    pub ns: Vec<u64>,
    pub clips: Vec<f64>,
    /// Data size of the clipping-norm panel.
    pub n_for_clips: u64,
    pub epsilon: f64,
}

impl Default for Fig2Config {
    fn default() -> Self {
        Self {
            ns: vec![1_000, 10_000, 100_000, 1_000_000],
            clips: vec![0.1, 0.5, 1.0, 10.0],
            n_for_clips: 10_000,
            epsilon: 1.0,
        }
    }
}

/// DP-SGLD against non-private SGLD on a logistic regression task.
#[derive(Debug, Clone)]
pub struct Fig3Config {
    pub train: Dataset,
    pub test: Dataset,
    pub epsilons: Vec<f64>,
    pub delta: f64,
    pub repeats: usize,
    pub iterations: u64,
    /// Step size `eta_1` of the non-private baseline.
    pub default_eta0: f64,
    pub clip: f64,
    pub seed: u64,
}

impl Fig3Config {
    /// Uses the default grid: `epsilon` in {0.05, 0.1, 0.2, 0.3, 0.5, 1},
    /// `delta = 1e-4`, 10 repeats, `T = 2000`, `eta_1 = 0.15`, `L = 1`.
    pub fn new(train: Dataset, test: Dataset) -> Self {
        Self {
            train,
            test,
            epsilons: vec![0.05, 0.1, 0.2, 0.3, 0.5, 1.0],
            delta: 1e-4,
            repeats: 10,
            iterations: 2000,
            default_eta0: 0.15,
            clip: 1.0,
            seed: 0,
        }
    }

    fn q(&self) -> f64 {
        default_q(self.train.len() as u64)
    }

    /// Sampler settings of the non-private baseline.
    pub fn baseline(&self) -> SamplerConfig {
        let mut cfg = SamplerConfig::new(self.q(), self.iterations, StepSizeSchedule::power_decay(self.default_eta0));
        cfg.clip = self.clip;
        cfg.delta = self.delta;
        cfg.seed = self.seed;
        cfg
    }

    /// Sampler settings of DP-SGLD at `epsilon`: the baseline with its
    /// step size capped by the certified bound. Returns the bound too.
    pub fn private(&self, epsilon: f64) -> Result<(SamplerConfig, f64)> {
        let bound = step_bound_decreasing(&BoundInputs {
            n: self.train.len() as u64,
            t: self.iterations,
            epsilon,
            delta: self.delta,
            clip: self.clip,
            q: self.q(),
        })?
        .eta1;
        let mut cfg = self.baseline();
        cfg.schedule = StepSizeSchedule::power_decay(self.default_eta0.min(bound));
        Ok((cfg, bound))
    }
}

fn accuracies(model: &LogisticRegression, cfg: &SamplerConfig, train: &Dataset, test: &Dataset, repeats: usize) -> Result<Vec<f64>> {
    let reps: Vec<u64> = (0..repeats as u64).collect();
    par::try_map(&reps, |&r| {
        let mut c = cfg.clone();
        c.chain = r;
        let (samples, _) = run_chain_uncertified(model, train, &c)?;
        let thetas: Vec<Vec<f64>> = samples.into_iter().map(|s| s.theta).collect();
        accuracy(model, &thetas, test)
    })
}

fn bound_inputs(n: u64, t: u64, epsilon: f64, delta: f64, clip: f64) -> BoundInputs {
    BoundInputs {
        n,
        t,
        epsilon,
        delta,
        clip,
        q: default_q(n),
    }
}

pub fn fig1(cfg: &Fig1Config) -> Result<Table> {
    let mut table = Table::new(&["epsilon", "eta1_decreasing", "eta_fixed", "eta_wang", "sigma1_decreasing", "sigma_fixed"]);
    let rows = par::try_map(&cfg.epsilons, |&eps| -> Result<Vec<f64>> {
        let inputs = bound_inputs(cfg.n, cfg.t, eps, cfg.delta, cfg.clip);
        let dec = step_bound_decreasing(&inputs)?;
        let fix = step_bound_fixed(&inputs)?;
        Ok(vec![eps, dec.eta1, fix.eta1, step_bound_wang(&inputs), dec.sigma1, fix.sigma1])
    })?;
    table.rows = rows;
    Ok(table)
}

pub fn fig2(cfg: &Fig2Config) -> Result<Table> {
    let mut table = Table::new(&[
        "n", "t", "delta", "clip_l", "epsilon", "q", "eta1_decreasing", "eta_fixed", "eta_wang",
    ]);
    let mut points: Vec<(u64, f64)> = cfg.ns.iter().map(|&n| (n, 1.0)).collect();
    points.extend(cfg.clips.iter().map(|&l| (cfg.n_for_clips, l)));
    table.rows = par::try_map(&points, |&(n, clip)| -> Result<Vec<f64>> {
        let inputs = bound_inputs(n, n, cfg.epsilon, 1.0 / n as f64, clip);
        let dec = step_bound_decreasing(&inputs)?;
        let fix = step_bound_fixed(&inputs)?;
        Ok(vec![
            n as f64,
            n as f64,
            inputs.delta,
            clip,
            cfg.epsilon,
            inputs.q,
            dec.eta1,
            fix.eta1,
            step_bound_wang(&inputs),
        ])
    })?;
    Ok(table)
}

pub fn fig3(cfg: &Fig3Config) -> Result<Table> {
    let mut table = Table::new(&[
        "epsilon",
        "delta",
        "eta1_bound",
        "eta1_used",
        "certified_epsilon",
        "same_as_baseline",
        "dp_accuracy_mean",
        "dp_accuracy_sd",
        "baseline_accuracy_mean",
        "baseline_accuracy_sd",
    ]);
    let model = LogisticRegression::new(cfg.train.width());
    let baseline = cfg.baseline();
    let base_acc = accuracies(&model, &baseline, &cfg.train, &cfg.test, cfg.repeats)?;
    let (base_mean, base_sd) = mean_and_sd(&base_acc);
    for &eps in &cfg.epsilons {
        let (private, bound) = cfg.private(eps)?;
        let same = private.schedule == baseline.schedule;
        // Identical settings and seeds give identical chains.
        let acc = if same {
            base_acc.clone()
        } else {
            accuracies(&model, &private, &cfg.train, &cfg.test, cfg.repeats)?
        };
        let certified = certify(&private, cfg.train.len())?
            .spend
            .map_or(f64::NAN, |s| s.epsilon);
        let (mean, sd) = mean_and_sd(&acc);
        table.rows.push(vec![
            eps,
            cfg.delta,
            bound,
            private.schedule.eta0,
            certified,
            f64::from(u8::from(same)),
            mean,
            sd,
            base_mean,
            base_sd,
        ]);
    }
    Ok(table)
}

/// Which figure to sweep.
#[derive(Debug, Clone)]
pub enum FigureSweep {
    Fig1(Fig1Config),
    Fig2(Fig2Config),
    Fig3(Box<Fig3Config>),
}

pub fn figure_sweeps(kind: &FigureSweep) -> Result<Table> {
    match kind {
        FigureSweep::Fig1(c) => fig1(c),
        FigureSweep::Fig2(c) => fig2(c),
        FigureSweep::Fig3(c) => fig3(c),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(samples: Vec<Vec<f64>>, weights: Vec<f64>) -> WeightedSampleSet {
        WeightedSampleSet::new(samples, weights).unwrap()
    }

    #[test]
    fn posterior_average_examples() {
        let s = set(vec![vec![3.0], vec![6.0]], vec![1.0, 2.0]);
        assert_eq!(posterior_average(&s, |t| t[0]).unwrap(), 5.0);
        assert_eq!(posterior_average(&s, |_| 7.5).unwrap(), 7.5);
        let eq = set(vec![vec![1.0], vec![2.0], vec![6.0]], vec![0.3; 3]);
        assert!((posterior_average(&eq, |t| t[0]).unwrap() - 3.0).abs() < 1e-15);
        let empty = set(vec![], vec![]);
        assert_eq!(posterior_average(&empty, |t| t[0]), Err(Error::EmptySet));
        assert!(WeightedSampleSet::new(vec![vec![1.0]], vec![0.0]).is_err());
        assert!(WeightedSampleSet::new(vec![vec![1.0]], vec![]).is_err());
    }

    #[test]
    fn bound_shape_examples() {
        let t: f64 = 1e6;
        let huge = MseBoundShape::new(0.7, 1e30, 100.0, 10.0);
        let v = mse_bound_shape(&huge, ScheduleKind::PowerDecay);
        assert!((v - 1.0 / 2.1).abs() < 1e-9);

        let mut fixed = MseBoundShape::new(t.powf(-1.0 / 3.0), t, 100.0, 100.0);
        fixed.gamma_m = 0.0;
        let v = mse_bound_shape(&fixed, ScheduleKind::Fixed);
        assert!((v / (2.0 * t.powf(-2.0 / 3.0)) - 1.0).abs() < 1e-12);

        let a = MseBoundShape::new(0.5, 1e4, 1000.0, 30.0);
        let b = MseBoundShape { gamma_m: 2.0, ..a };
        let (ta, tb) = (a.terms(ScheduleKind::PowerDecay), b.terms(ScheduleKind::PowerDecay));
        assert!((tb[0] / ta[0] - 2.0).abs() < 1e-14);
        assert_eq!((ta[1], ta[2]), (tb[1], tb[2]));
    }

    #[test]
    fn accuracy_tie_rule_and_duplication() {
        let test = Dataset::new(1, vec![1.0, -1.0, 2.0, 0.5], vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        let model = LogisticRegression::new(1);
        // theta = 0 predicts 1 everywhere: the majority fraction
        assert_eq!(accuracy(&model, &[vec![0.0, 0.0]], &test).unwrap(), 0.75);
        let samples = vec![vec![1.0, 0.0], vec![-0.2, 0.1]];
        let doubled: Vec<Vec<f64>> = samples.iter().chain(&samples).cloned().collect();
        assert_eq!(
            accuracy(&model, &samples, &test).unwrap(),
            accuracy(&model, &doubled, &test).unwrap()
        );
        assert!(accuracy(&GaussianMeanModel::default(), &[vec![0.0]], &Dataset::new(0, vec![], vec![1.0]).unwrap()).is_err());
    }

    #[test]
    fn table_csv() {
        let mut t = Table::new(&["a", "b"]);
        t.rows.push(vec![0.1, 2.0]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n0.1,2\n");
        assert_eq!(t.column("b"), Some(vec![2.0]));
    }
}
