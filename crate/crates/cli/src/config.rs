//! Run configuration shared by flags and JSON config files.
//!
//! JSON keys are the flag names without the leading dashes. Values given on
//! the command line win over the file.

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Privacy spent by a noise or step-size schedule.
    Account,
    /// Largest certified step size and its validity report.
    Bound,
    /// Run a chain and write its samples.
    Sample,
    /// Run a figure sweep and write its table.
    Experiment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    Fixed,
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicsKind {
    Sgld,
    Sghmc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    Poisson,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// One-dimensional Gaussian mean, observations in the label column.
    Gaussian,
    /// Bayesian logistic regression with an intercept.
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
}

/// Every option is optional here; commands check what they need.
#[derive(Debug, Clone, Default, PartialEq, Parser, Serialize, Deserialize)]
#[command(name = "dpsgmcmc", version, about = "Differentially-private SG-MCMC: accounting, step-size bounds, sampling")]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    /// Command to run; may also be given as `--command`.
    #[arg(value_enum)]
    #[serde(skip)]
    pub positional: Option<Command>,

    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,

    /// Dataset size N (synthetic row count when no --data is given).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,

    /// Iterations T.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<u64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,

    /// Gradient clipping norm L.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_l: Option<f64>,

    /// Sampling probability.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,

    /// Minibatch size; sets q = tau / N for Poisson sampling.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<u64>,

    /// Constant noise multiplier, for `account` without a step-size schedule.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,

    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Schedule>,

    /// Step size at t = 1.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta0: Option<f64>,

    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsKind>,

    /// SGHMC friction B.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub friction: Option<f64>,

    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampling: Option<Sampling>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<u64>,

    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelKind>,

    /// Feature count of synthetic logistic data.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<usize>,

    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub figure: Option<Figure>,

    /// Repetitions per configuration in `experiment fig3`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    /// Dataset: a CSV written by this tool, or UCI Adult (`*.data`).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,

    /// Held-out Adult file (`adult.test`) for `experiment fig3`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_data: Option<PathBuf>,

    /// Output CSV; stdout when absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,

    /// JSON file with any of the above keys.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("bad config {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Missing(String),
}

impl RunConfig {
    /// Applies the config file (if any) underneath the flags.
    pub fn resolve(mut self) -> Result<Self, ConfigError> {
        if self.positional.is_some() {
            self.command = self.positional.take();
        }
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Read { path: path.clone(), source })?;
        let mut merged: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(&text).map_err(|source| ConfigError::Json { path: path.clone(), source })?;
        let flags = serde_json::to_value(&self).expect("config serialises");
        if let serde_json::Value::Object(flags) = flags {
            merged.extend(flags);
        }
        let mut out: RunConfig = serde_json::from_value(serde_json::Value::Object(merged))
            .map_err(|source| ConfigError::Json { path: path.clone(), source })?;
        out.config = Some(path);
        Ok(out)
    }

    pub fn require<T: Copy>(&self, value: Option<T>, flag: &str) -> Result<T, ConfigError> {
        value.ok_or_else(|| ConfigError::Missing(format!("--{flag} is required for this command")))
    }

    /// Where the effective configuration is echoed.
    pub fn sidecar_path(&self) -> PathBuf {
        match &self.out {
            Some(out) => {
                let mut name = out.file_name().unwrap_or_default().to_os_string();
                name.push(".config.json");
                out.with_file_name(name)
            }
            None => Path::new("dpsgmcmc.config.json").to_path_buf(),
        }
    }

    pub fn write_sidecar(&self) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("config serialises");
        std::fs::write(self.sidecar_path(), json + "\n")
    }
}
