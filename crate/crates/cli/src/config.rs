//! Run configuration: command-line flags layered over an optional flat TOML file, then
//! defaults. The resolved configuration is written next to every run's outputs.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use twostage::bootstrap::IntervalKind;
use twostage::lasso::LassoOptions;
use twostage::stability::StabilityConfig;
use twostage::two_stage::{LambdaPolicy, PipelineConfig, SecondStage, Selection, Tuning};

use crate::Failure;

/// File name of the resolved configuration inside the output directory.
pub const RUN_CONFIG_FILE: &str = "run_config.toml";
pub const SEED_ENV: &str = "TWOSTAGE_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Fit,
    Bootstrap,
    Simulate,
    Coverage,
    Diagnose,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Bootstrap => "bootstrap",
            Command::Simulate => "simulate",
            Command::Coverage => "coverage",
            Command::Diagnose => "diagnose",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum Estimator {
    #[serde(rename = "lasso")]
    #[value(name = "lasso")]
    Lasso,
    #[serde(rename = "lasso+mls")]
    #[value(name = "lasso+mls")]
    LassoMls,
    #[serde(rename = "lasso+ridge")]
    #[value(name = "lasso+ridge")]
    LassoRidge,
    #[serde(rename = "ss+mls")]
    #[value(name = "ss+mls")]
    SsMls,
    #[serde(rename = "ss+ridge")]
    #[value(name = "ss+ridge")]
    SsRidge,
}

impl Estimator {
    pub fn label(self) -> &'static str {
        match self {
            Estimator::Lasso => "lasso",
            Estimator::LassoMls => "lasso+mls",
            Estimator::LassoRidge => "lasso+ridge",
            Estimator::SsMls => "ss+mls",
            Estimator::SsRidge => "ss+ridge",
        }
    }

    fn uses_stability(self) -> bool {
        matches!(self, Estimator::SsMls | Estimator::SsRidge)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CiKind {
    Basic,
    Percentile,
}

impl From<CiKind> for IntervalKind {
    fn from(k: CiKind) -> Self {
        match k {
            CiKind::Basic => IntervalKind::Basic,
            CiKind::Percentile => IntervalKind::Percentile,
        }
    }
}

/// Settings shared by every subcommand. Each one can also come from the `--config` file,
/// under the same key as the flag.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Input CSV (numeric; a header row is detected automatically).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Response column: header name, zero-based index, or "last".
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long, value_enum)]
    pub estimator: Option<Estimator>,
    /// mLS singular-value threshold (default 1/n).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Ridge penalty after selection (default 1/n).
    #[arg(long)]
    pub mu: Option<f64>,
    /// Lasso penalty: "cv" or a positive number on the ||y - Xb||^2 + lambda ||b||_1 scale.
    #[arg(long)]
    pub lambda: Option<String>,
    /// Bootstrap replicates.
    #[arg(long = "B")]
    #[serde(rename = "B")]
    pub b: Option<usize>,
    /// Confidence level in (0, 1).
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long, value_enum)]
    pub ci: Option<CiKind>,
    /// Simulation setting 1..=8.
    #[arg(long)]
    pub example: Option<u8>,
    /// Monte Carlo datasets.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Base seed; falls back to TWOSTAGE_SEED, then 1.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Subcommand recorded in a saved configuration; must match the one being run.
    #[arg(skip)]
    pub command: Option<Command>,
}

impl Overrides {
    fn or(self, file: Overrides) -> Overrides {
        Overrides {
            input: self.input.or(file.input),
            response: self.response.or(file.response),
            estimator: self.estimator.or(file.estimator),
            tau: self.tau.or(file.tau),
            mu: self.mu.or(file.mu),
            lambda: self.lambda.or(file.lambda),
            b: self.b.or(file.b),
            level: self.level.or(file.level),
            ci: self.ci.or(file.ci),
            example: self.example.or(file.example),
            reps: self.reps.or(file.reps),
            seed: self.seed.or(file.seed),
            workers: self.workers.or(file.workers),
            out: self.out.or(file.out),
            command: self.command.or(file.command),
        }
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub response: String,
    pub estimator: Estimator,
    /// Absent means `1/n`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Absent means `1/n`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    pub lambda: String,
    #[serde(rename = "B")]
    pub b: usize,
    pub level: f64,
    pub ci: CiKind,
    pub example: u8,
    pub reps: usize,
    pub seed: u64,
    /// Not part of the result; recorded for reference.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub out: PathBuf,
}

fn config_err(flag: &str, msg: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("--{flag}: {msg}"))
}

pub fn read_config_file(path: &Path) -> Result<Overrides, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err("config", format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| config_err("config", format!("{}: {e}", path.display())))
}

impl RunConfig {
    /// Flags override the file, the file overrides defaults.
    pub fn resolve(command: Command, flags: Overrides, file: Option<Overrides>) -> Result<Self, Failure> {
        let o = flags.or(file.unwrap_or_default());
        if let Some(saved) = o.command {
            if saved != command {
                return Err(config_err(
                    "config",
                    format!("file was written by `{}`, not `{}`", saved.name(), command.name()),
                ));
            }
        }
        let seed = match o.seed {
            Some(s) => s,
            None => match std::env::var(SEED_ENV) {
                Ok(v) => v
                    .trim()
                    .parse()
                    .map_err(|_| config_err("seed", format!("{SEED_ENV}={v:?} is not an unsigned integer")))?,
                Err(_) => 1,
            },
        };
        let config = RunConfig {
            command,
            input: o.input,
            response: o.response.unwrap_or_else(|| "last".into()),
            estimator: o.estimator.unwrap_or(Estimator::LassoMls),
            tau: o.tau,
            mu: o.mu,
            lambda: o.lambda.unwrap_or_else(|| "cv".into()),
            b: o.b.unwrap_or(500),
            level: o.level.unwrap_or(0.9),
            ci: o.ci.unwrap_or(CiKind::Basic),
            example: o.example.unwrap_or(1),
            reps: o.reps.unwrap_or(100),
            seed,
            workers: o.workers,
            out: o.out.unwrap_or_else(|| PathBuf::from(format!("twostage-{}", command.name()))),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), Failure> {
        if matches!(self.command, Command::Fit | Command::Bootstrap) && self.input.is_none() {
            return Err(config_err("input", format!("required by `{}`", self.command.name())));
        }
        if !(1..=8).contains(&self.example) {
            return Err(config_err("example", format!("must be in 1..=8, got {}", self.example)));
        }
        if self.b == 0 {
            return Err(config_err("B", "must be at least 1"));
        }
        if self.reps == 0 {
            return Err(config_err("reps", "must be at least 1"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(config_err("level", format!("must lie in (0, 1), got {}", self.level)));
        }
        if let Some(t) = self.tau {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(config_err("tau", format!("must be a finite value >= 0, got {t}")));
            }
        }
        if let Some(m) = self.mu {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(config_err("mu", format!("must be a finite value >= 0, got {m}")));
            }
        }
        if self.workers == Some(0) {
            return Err(config_err("workers", "must be at least 1"));
        }
        let fixed = self.fixed_lambda()?;
        if fixed.is_some() && self.estimator.uses_stability() {
            return Err(config_err("lambda", "a fixed penalty applies to Lasso selection only"));
        }
        Ok(())
    }

    /// `None` for cross-validation.
    pub fn fixed_lambda(&self) -> Result<Option<f64>, Failure> {
        if self.lambda.eq_ignore_ascii_case("cv") {
            return Ok(None);
        }
        match self.lambda.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(Some(v)),
            _ => Err(config_err("lambda", format!("expected \"cv\" or a positive number, got {:?}", self.lambda))),
        }
    }

    pub fn pipeline(&self) -> PipelineConfig<f64> {
        let tau = self.tau.map_or(Tuning::InverseN, Tuning::Value);
        let mu = self.mu.map_or(Tuning::InverseN, Tuning::Value);
        let second_stage = match self.estimator {
            Estimator::Lasso => SecondStage::None,
            Estimator::LassoMls | Estimator::SsMls => SecondStage::Mls { tau },
            Estimator::LassoRidge | Estimator::SsRidge => SecondStage::Ridge { mu },
        };
        if self.estimator.uses_stability() {
            return PipelineConfig {
                selection: Selection::Stability(StabilityConfig::new(self.seed)),
                second_stage,
                lasso: LassoOptions::default(),
                zero_tol: 0.0,
            };
        }
        let config = PipelineConfig::lasso_cv(second_stage, self.seed);
        match self.fixed_lambda() {
            Ok(Some(l)) => PipelineConfig {
                selection: Selection::Lasso {
                    lambda: LambdaPolicy::Fixed(l),
                },
                ..config
            },
            _ => config,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }
}
