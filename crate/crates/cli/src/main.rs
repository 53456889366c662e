//! `pcgat` command-line front end.
//!
//! Every subcommand writes its artifacts plus a `manifest.json` into a fresh
//! `--out` directory. Exit codes: 0 success, 1 failed validation, 2 usage or
//! configuration error, 3 shape or compatibility error, 4 numeric failure,
//! 5 I/O error.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser, Debug)]
#[command(name = "pcgat", version, about = "Max-min power control for cell-free massive MIMO")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Built-in deployment preset (1-5).
    #[arg(long)]
    pub scenario: Option<u8>,
    /// TOML configuration file; overrides --scenario.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config field, e.g. `--set aps=8` or `--set radio.noise_figure_db=7`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Master random seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created; must be empty if it exists).
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads for generation and evaluation (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a dataset of network instances.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Number of instances to generate.
        #[arg(long, default_value_t = 1000)]
        count: usize,
    },
    /// Train the graph attention network on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset file written by `generate`.
        #[arg(long)]
        dataset: PathBuf,
        /// Warm-start from this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Sharpness of the smoothed minimum.
        #[arg(long, default_value_t = 3.0)]
        lambda: f64,
        /// Input perturbation (dB) applied during training.
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        /// Train without the pilot-contamination attribute.
        #[arg(long)]
        ablation: bool,
        /// Arithmetic precision; only f64 is supported.
        #[arg(long, default_value = "f64")]
        precision: String,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-3)]
        learning_rate: f64,
    },
    /// Evaluate APG and a trained network on a dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Dataset file written by `generate`.
        #[arg(long)]
        dataset: PathBuf,
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Sharpness of the smoothed minimum.
        #[arg(long, default_value_t = 3.0)]
        lambda: f64,
        /// Input perturbation (dB) seen by the methods.
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        /// Run the network without the pilot-contamination attribute.
        #[arg(long)]
        ablation: bool,
    },
    /// Solve every instance of a dataset with APG.
    Apg {
        #[command(flatten)]
        common: Common,
        /// Dataset file written by `generate`.
        #[arg(long)]
        dataset: PathBuf,
        /// Sharpness of the smoothed minimum.
        #[arg(long, default_value_t = 3.0)]
        lambda: f64,
    },
    /// Per-sample runtime of APG and the network.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Dataset file written by `generate`.
        #[arg(long)]
        dataset: PathBuf,
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Sharpness of the smoothed minimum.
        #[arg(long, default_value_t = 3.0)]
        lambda: f64,
        /// Number of dataset records to time.
        #[arg(long, default_value_t = 20)]
        count: usize,
        /// Timed repeats (at least 3).
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Monte-Carlo channel-statistics check and structural property suite.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Monte-Carlo channel realizations.
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        /// Random instances for the property suite.
        #[arg(long, default_value_t = 20)]
        count: usize,
    },
}

/// Failure categories, each with its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] pcgat::Error),
    #[error("validation failed: {0}")]
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use pcgat::Error as E;
        match self {
            CliError::Validation(_) => 1,
            CliError::Core(e) => match e {
                E::Config(_) | E::Input(_) => 2,
                E::Shape { .. } => 3,
                E::Numeric(_) | E::Ad(_) => 4,
                E::Io { .. } | E::Format { .. } => 5,
            },
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
