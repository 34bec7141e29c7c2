//! `permnet` — permission-feature malware classification pipeline.
//!
//! Subcommands: `synth`, `build-dataset`, `split`, `train`, `evaluate`,
//! `gradcheck`, `audit-duplicates`. Exit codes are fixed for scripting:
//! 0 success, 2 input/config error, 3 empty filter result, 4 numeric
//! failure during training, 5 gradient-check failure.

mod commands;
mod config;
mod presets;
mod synth;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config file, or model/shape setup (exit 2).
    Config(String),
    /// Unreadable or malformed input data (exit 2).
    Input(String),
    /// The permission filter kept nothing (exit 3).
    EmptyFilter,
    /// Non-finite values during training (exit 4).
    Numeric(String),
    /// Gradient check exceeded its tolerance (exit 5).
    GradcheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::EmptyFilter => 3,
            CliError::Numeric(_) => 4,
            CliError::GradcheckFailed(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Input(msg) => write!(f, "input error: {msg}"),
            CliError::EmptyFilter => write!(f, "no permissions survive the filter rules"),
            CliError::Numeric(msg) => write!(f, "numeric failure: {msg}"),
            CliError::GradcheckFailed(msg) => write!(f, "gradient check failed: {msg}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "permnet",
    version,
    about = "Android permission-based malware classification pipeline"
)]
struct Cli {
    /// JSON experiment config (a run manifest also works).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; every stochastic step derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for generated files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse app metadata, filter permissions, and write a PDSV dataset.
    BuildDataset(commands::build_dataset::BuildDatasetArgs),
    /// Split a PDSV dataset into train/validation/test files.
    Split(commands::split::SplitArgs),
    /// Train a classifier and write checkpoint, history, and manifest.
    Train(commands::train::TrainArgs),
    /// Evaluate a checkpoint on a PDSV dataset.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Verify analytic gradients against finite differences.
    Gradcheck(commands::gradcheck::GradcheckArgs),
    /// Generate a synthetic labeled corpus from a planted rule.
    Synth(commands::synth::SynthArgs),
    /// Count duplicate feature rows with conflicting labels.
    AuditDuplicates(commands::audit::AuditArgs),
}

/// Resolved global options shared by every command.
pub struct Ctx {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub quiet: bool,
}

pub const DEFAULT_SEED: u64 = 42;

impl Ctx {
    fn new(cli: &Cli) -> Result<Ctx, CliError> {
        let config = match &cli.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let seed = cli.seed.or(config.seed).unwrap_or(DEFAULT_SEED);
        let out_dir = cli
            .out_dir
            .clone()
            .or_else(|| config.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("permnet-out"));
        Ok(Ctx {
            config,
            seed,
            out_dir,
            quiet: cli.quiet,
        })
    }

    pub fn say(&self, line: impl fmt::Display) {
        if !self.quiet {
            println!("{line}");
        }
    }

    pub fn ensure_out_dir(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| {
            CliError::Config(format!("cannot create {}: {e}", self.out_dir.display()))
        })
    }
}

/// Seed streams derived from the global seed, one per pipeline stage.
pub mod seed_streams {
    pub const MODEL: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const BALANCE: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    pub const GRADCHECK: u64 = 5;
    pub const SYNTH: u64 = 6;
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = Ctx::new(&cli)?;
    match &cli.command {
        Command::BuildDataset(args) => commands::build_dataset::run(&ctx, args),
        Command::Split(args) => commands::split::run(&ctx, args),
        Command::Train(args) => commands::train::run(&ctx, args),
        Command::Evaluate(args) => commands::evaluate::run(&ctx, args),
        Command::Gradcheck(args) => commands::gradcheck::run(&ctx, args),
        Command::Synth(args) => commands::synth::run(&ctx, args),
        Command::AuditDuplicates(args) => commands::audit::run(&ctx, args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(error) = run(cli) {
        eprintln!("error: {error}");
        std::process::exit(error.exit_code());
    }
}
