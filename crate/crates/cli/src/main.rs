//! `mlscape` command-line front end: one subcommand per experiment, each
//! reading an optional TOML config and writing CSV, JSON, DOT and tree-line
//! files into an output directory.

mod commands;
mod config;
mod objective;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "mlscape", version, about = "Energy-landscape experiments for machine-learning cost functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

/// Flags shared by every subcommand. Flags override config-file values,
/// which override built-in defaults.
#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// TOML experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Continue from the checkpoint left in the output directory.
    #[arg(long, global = true)]
    pub resume: bool,
    /// Stop after this many units of work (basin-hopping steps or connect
    /// jobs), leaving a checkpoint for `--resume`.
    #[arg(long, global = true, hide = true)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Labelled LBFGS quench sequences of the three-atom cluster.
    TriatomicDataset,
    /// Basin-hopping over the network cost for one input mode, s and λ.
    TrainLandscape,
    /// Transition states joining the minima of a stored database.
    Connect,
    /// Disconnectivity tree of a stored database.
    Disconnectivity,
    /// Harmonic-superposition heat capacity and its partial sums.
    Cv,
    /// Test AUC against the number of steps before convergence.
    Auc,
    /// Landscape of the damped product-of-sines regression.
    Regression,
    /// Digit-recognition minima, misclassification distances and network.
    Digits,
    /// Network statistics and DOT export of a stored database.
    Netstats,
    /// Spherical p-spin quench ensembles and landscape.
    Pspin,
    /// Student networks trained on teacher outputs.
    TeacherStudent,
    /// Basin volumes and entropies of a toy landscape.
    Basinvol,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::TriatomicDataset => "triatomic-dataset",
            Command::TrainLandscape => "train-landscape",
            Command::Connect => "connect",
            Command::Disconnectivity => "disconnectivity",
            Command::Cv => "cv",
            Command::Auc => "auc",
            Command::Regression => "regression",
            Command::Digits => "digits",
            Command::Netstats => "netstats",
            Command::Pspin => "pspin",
            Command::TeacherStudent => "teacher-student",
            Command::Basinvol => "basinvol",
        }
    }
}

/// Failure reported as one JSON object on stderr.
#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }

    fn exit_code(&self) -> u8 {
        if self.kind == "usage" {
            2
        } else {
            1
        }
    }
}

impl From<mlscape::Error> for CliError {
    fn from(e: mlscape::Error) -> Self {
        use mlscape::Error as E;
        let kind = match &e {
            E::DimensionMismatch { .. } => "dimension_mismatch",
            E::NonFinite { .. } => "non_finite",
            E::Eigensolver { .. } => "eigensolver",
            E::WrongIndex { .. } => "wrong_index",
            E::NotConverged(_) => "not_converged",
            E::Domain(_) => "domain",
            E::Precondition(_) => "precondition",
            E::Inconsistent(_) => "inconsistent",
            E::Schema { .. } => "schema",
            E::Parse(_) => "parse",
            E::Io(_) => "io",
            E::Json(_) => "json",
        };
        Self::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new("io", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new("json", e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn report(err: &CliError) -> ExitCode {
    let body = serde_json::json!({ "error": { "kind": err.kind, "message": err.message } });
    eprintln!("{body}");
    ExitCode::from(err.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return report(&CliError::new("usage", e.to_string().trim_end())),
    };
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return report(&CliError::new("usage", format!("--threads: {e}")));
        }
    }
    match commands::run(cli.command, &cli.common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
