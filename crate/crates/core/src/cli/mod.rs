//! The `gnnkrige` command line: `gen`, `train`, `krige`, `eval`,
//! `transfer` and `virtual`.
//!
//! Configuration is resolved as defaults, then the configuration stored in
//! a checkpoint (commands that read one), then `--config`, then flags.
//! Every command writes its resolved configuration to `run.toml` in the
//! output directory.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;

pub use config::{AdjacencyChoice, RunConfig};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "GNNKRIGE_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Run(e) => match e {
                Error::Format {
                    what: "run config", ..
                } => EXIT_USAGE,
                Error::Parameter(_)
                | Error::Dimension { .. }
                | Error::Ingest { .. }
                | Error::Format { .. }
                | Error::Io { .. } => EXIT_DATA,
                Error::NonFinite { .. } | Error::Training { .. } | Error::Internal(_) => {
                    EXIT_NUMERIC
                }
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "gnnkrige",
    version,
    about = "Inductive graph neural network kriging"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic sensor dataset.
    Gen(GenArgs),
    /// Train a model on the observed sensors of a dataset.
    Train(TrainArgs),
    /// Estimate chosen sensors of one time window from the others.
    Krige(KrigeArgs),
    /// Score a trained model on the held-out sensors of its dataset.
    Eval(EvalArgs),
    /// Score a trained model on a different dataset, without retraining.
    Transfer(TransferArgs),
    /// Estimate virtual sensors on the segment between two sensors.
    Virtual(VirtualArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Run configuration file (TOML `key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory.
    #[arg(long, env = OUT_ENV)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub signals: Option<PathBuf>,
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// JSON file with field parameters; the built-in field otherwise.
    #[arg(long)]
    pub field: Option<PathBuf>,
    #[arg(long, env = OUT_ENV)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub adjacency: Option<String>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Stop after this many iterations of this invocation, leaving a
    /// checkpoint to resume from.
    #[arg(long)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct KrigeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Comma-separated ids of the sensors to estimate.
    #[arg(long, value_delimiter = ',')]
    pub r#virtual: Vec<String>,
    /// First time step of the window.
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    /// Window length; defaults to the model's.
    #[arg(long)]
    pub len: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Extra estimators to score: `knn:K` or `mean`; repeatable.
    #[arg(long)]
    pub baseline: Vec<String>,
    /// Score the ground truth itself instead of the model (self-test).
    #[arg(long)]
    pub perfect: bool,
    /// Write an SVG chart of the first held-out sensor.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TransferArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
}

#[derive(Debug, Clone, Args)]
pub struct VirtualArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Sensor id of the first endpoint.
    #[arg(long)]
    pub from: String,
    /// Sensor id of the second endpoint.
    #[arg(long)]
    pub to: String,
    #[arg(long)]
    pub count: usize,
    /// Spacing in coordinate units; even spacing between the endpoints
    /// otherwise.
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub start: usize,
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(a) => commands::gen(&a),
        Command::Train(a) => commands::train(&a),
        Command::Krige(a) => commands::krige(&a),
        Command::Eval(a) => commands::eval(&a, false),
        Command::Transfer(a) => {
            if a.eval.common.signals.is_none() || a.eval.common.geometry.is_none() {
                return Err(CliError::Usage(
                    "transfer needs --signals and --geometry of the target".into(),
                ));
            }
            commands::eval(&a.eval, true)
        }
        Command::Virtual(a) => commands::virtual_sensors(&a),
    }
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
