//! Experiment driver behind the `eqv2i` binary.
//!
//! Every subcommand reads one configuration, writes its artifacts into the
//! output directory and finishes with `manifest-<command>.toml`, which lists
//! every file it wrote with its size and SHA-256.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod manifest;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad configuration, bad input files or a missing upstream artifact.
    Validation,
    Runtime,
}

#[derive(Debug, Clone)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Validation, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Runtime, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation => 2,
            ErrorKind::Runtime => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<eqv2i::Error> for CliError {
    fn from(e: eqv2i::Error) -> Self {
        if e.is_validation() {
            CliError::validation(e.to_string())
        } else {
            CliError::runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::runtime(format!("csv: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "eqv2i", version, about = "C4-equivariant beam selection experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// TOML configuration; defaults apply (seed 0) when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Directory holding upstream artifacts; defaults to --out.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker thread cap; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Offline datasets: unlabelled CSI, camera positions and their CSI.
    GenData,
    /// Geodesic distances, blind alignment and charting with metrics.
    Sense,
    /// PPO training of the configured policy kind.
    MarlTrain,
    /// Online rollouts of a trained policy on true and sensed states.
    Eval,
    /// Q* asymmetry against its bound over perturbed tabular MDPs.
    TheoryCheck,
    /// Reward and transition symmetry residuals of the simulator.
    EnvCheck,
    /// Print the resolved configuration.
    PrintConfig,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Sense => "sense",
            Command::MarlTrain => "marl-train",
            Command::Eval => "eval",
            Command::TheoryCheck => "theory-check",
            Command::EnvCheck => "env-check",
            Command::PrintConfig => "print-config",
        }
    }
}

/// Resolve the configuration for `args`: file or defaults, then the seed override.
pub fn resolve_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::with_seed(0),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    eqv2i::par::set_jobs(cli.common.jobs);
    let cfg = resolve_config(&cli.common)?;
    if cli.command == Command::PrintConfig {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let input = cli.common.input.clone().unwrap_or_else(|| cli.common.out.clone());
    commands::execute(cli.command, &cfg, &input, &cli.common.out)
}
