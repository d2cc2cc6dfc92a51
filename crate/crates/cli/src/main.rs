//! `twostage`: fit, bootstrap, simulate, coverage and diagnose subcommands over the twostage
//! library. Exit status 0 on success, 2 on configuration or input errors, 1 on runtime failures.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{read_config_file, Command, Overrides, RunConfig, RUN_CONFIG_FILE};
use output::Artifacts;

#[derive(Parser)]
#[command(name = "twostage", version, about = "Two-stage Lasso estimators with residual bootstrap inference")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit the estimator to a CSV dataset and write its coefficients.
    Fit(RunArgs),
    /// Fit, then write a residual-bootstrap ensemble and confidence intervals.
    Bootstrap(RunArgs),
    /// Bias, MSE and PMSE of Lasso, Lasso+mLS and Lasso+Ridge on a simulation setting.
    Simulate(RunArgs),
    /// Bootstrap interval coverage and length on a simulation setting.
    Coverage(RunArgs),
    /// Irrepresentable condition, C11 eigenvalue floor and sparse eigenvalues.
    Diagnose(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat TOML file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: Overrides,
}

/// How a run failed, which decides the exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, configuration or input data.
    Config(String),
    Runtime(anyhow::Error),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<twostage::Error> for Failure {
    fn from(e: twostage::Error) -> Self {
        match e.root() {
            twostage::Error::InvalidConfig(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

fn run(command: Command, args: RunArgs) -> Result<Vec<PathBuf>, Failure> {
    let file = args.config.as_deref().map(read_config_file).transpose()?;
    let config = RunConfig::resolve(command, args.flags, file)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Runtime(e.into()))?;
    let mut artifacts = Artifacts::open(&config.out)?;
    let result = artifacts
        .write(RUN_CONFIG_FILE, config.to_toml())
        .and_then(|_| pool.install(|| commands::execute(&config, &mut artifacts)));
    match result {
        Ok(()) => Ok(artifacts.written().to_vec()),
        Err(e) => {
            artifacts.discard();
            Err(e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Fit(a) => (Command::Fit, a),
        Cmd::Bootstrap(a) => (Command::Bootstrap, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Coverage(a) => (Command::Coverage, a),
        Cmd::Diagnose(a) => (Command::Diagnose, a),
    };
    match run(command, args) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("twostage {}: {e}", command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
