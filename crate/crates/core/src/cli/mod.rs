//! The `kpcluster` command line: `simulate`, `grid`, `report` and `replay`.
//!
//! Exit codes: 0 on success, 1 when a computation fails, 2 for usage and
//! I/O problems.

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::DEFAULT_RESTARTS;
use crate::data::DataError;
use crate::pipeline::{PipelineError, DEFAULT_NEIGHBORS};

pub use manifest::{fingerprint, Fingerprint, Invocation, RunManifest, Timing};

#[derive(Debug, Parser)]
#[command(name = "kpcluster", version, about = "Kernel PCA clustering with gap, Dunn and silhouette validation")]
pub struct Cli {
    /// Worker threads; defaults to every available core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a two-dimensional data set, extract two kernel principal
    /// components and cluster them.
    Simulate(SimulateArgs),
    /// Run the kernel and component grid search on a data file.
    Grid(GridArgs),
    /// Robustness tables, cluster summaries and figure data for a grid run.
    Report(ReportArgs),
    /// Repeat a recorded command from its manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Spirals,
    Shapes,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(value_enum)]
    pub generator: Generator,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Gaussian noise standard deviation (spirals only).
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// JSON config; every field is optional.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Data file, overriding the config.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub kmax: Option<usize>,
    /// Bootstrap replicates for the scale interval.
    #[arg(long = "bootstrap-B")]
    pub bootstrap_b: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directory of a `grid` run.
    #[arg(long)]
    pub run: PathBuf,
    /// Defaults to `<run>/report`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Largest hierarchical cut scored by silhouette width.
    #[arg(long, default_value_t = 5)]
    pub kmax: usize,
    #[arg(long, default_value_t = DEFAULT_NEIGHBORS)]
    pub neighbors: usize,
    /// Histogram bins for the figure data.
    #[arg(long, default_value_t = 30)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Pipeline(#[from] PipelineError),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error("{0}")]
    Compute(String),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        let data_is_io = |e: &DataError| {
            matches!(
                e,
                DataError::Open { .. }
                    | DataError::Io(_)
                    | DataError::Csv(_)
                    | DataError::MissingColumn(_)
                    | DataError::EmptyCatalog { .. }
                    | DataError::Parse { .. }
            )
        };
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 2,
            CliError::Data(e) if data_is_io(e) => 2,
            CliError::Pipeline(PipelineError::Data(e)) if data_is_io(e) => 2,
            CliError::Pipeline(PipelineError::Config { .. } | PipelineError::Io(_) | PipelineError::Csv(_)) => 2,
            _ => 1,
        }
    }
}

fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure {n} threads: {e}")))?;
    Ok(())
}

/// Execute an already parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Grid(a) => commands::grid(&a),
        Command::Report(a) => commands::report(&a),
        Command::Replay(a) => commands::replay(&a),
    }
}

/// Parse the process arguments, run, and map the result to an exit code.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(2));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_grid_flags() {
        let cli = Cli::try_parse_from([
            "kpcluster", "--threads", "2", "grid", "--data", "d.csv", "--out", "o", "--bootstrap-B", "300", "--kmax", "4",
        ])
        .unwrap();
        assert_eq!(cli.threads, Some(2));
        match cli.command {
            Command::Grid(g) => {
                assert_eq!(g.bootstrap_b, Some(300));
                assert_eq!(g.kmax, Some(4));
                assert_eq!(g.data, Some(PathBuf::from("d.csv")));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_generator_is_usage_error() {
        let err = Cli::try_parse_from(["kpcluster", "simulate", "moons", "--out", "x"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn exit_codes() {
        let missing = DataError::Open {
            path: "x".into(),
            source: std::io::Error::from(std::io::ErrorKind::NotFound),
        };
        assert_eq!(CliError::Pipeline(PipelineError::Data(missing)).exit_code(), 2);
        assert_eq!(CliError::Pipeline(PipelineError::AllCellsFailed).exit_code(), 1);
        assert_eq!(CliError::Compute("x".into()).exit_code(), 1);
    }
}
