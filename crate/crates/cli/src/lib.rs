//! Command-line driver: ingest or synthesize prediction cohorts, build
//! accuracy-vs-cost curves and frontiers, replay parallel serving, and run
//! ensemble architecture searches, leaving a rerunnable manifest beside
//! every set of outputs.

pub mod commands;
pub mod config;
pub mod manifest;

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] enskit::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for configuration problems, 3 for data or I/O problems, 4 for
    /// internal invariant violations.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_internal() => 4,
            CliError::Core(e) if e.is_data_error() => 3,
            // Remaining core errors are validation failures of config-born
            // values (bad epsilon, empty member list, ...).
            CliError::Core(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}

/// Writes via a temp file in the same directory, then renames into place,
/// so a crash can never leave a half-written artifact under the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io_err = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file_name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| CliError::Config(format!("bad output path {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{file_name}.partial"));
    std::fs::write(&tmp, bytes).map_err(io_err)?;
    std::fs::rename(&tmp, path).map_err(io_err)
}

#[derive(Debug, Parser)]
#[command(
    name = "enskit",
    version,
    about = "Ensemble accuracy/cost analysis toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON config file; relative paths inside it resolve against its
    /// directory.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Top-level seed; every random stream is derived from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    /// Manifest of a previous run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where to re-create the outputs (defaults to the manifest's
    /// directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic prediction cohorts.
    Cohort(RunArgs),
    /// Build accuracy-vs-cost curves, a combined frontier, and crossovers.
    Curves(RunArgs),
    /// Replay fanned-out ensemble serving and report latency statistics.
    Simulate(RunArgs),
    /// Search the architecture space for latency-aware ensembles.
    Search(RunArgs),
    /// Re-execute a previous run from its manifest.
    Rerun(RerunArgs),
}

fn config_dir(config_path: &Path) -> Result<PathBuf, CliError> {
    let canonical = std::fs::canonicalize(config_path).map_err(|e| CliError::Io {
        path: config_path.to_path_buf(),
        source: e,
    })?;
    Ok(canonical
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("/")))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Cohort(a) => {
            let cfg: config::CohortConfig = config::load(&a.config)?;
            commands::cmd_cohort(cfg, &a.out, a.seed)?;
        }
        Command::Curves(a) => {
            let mut cfg: config::CurvesConfig = config::load(&a.config)?;
            cfg.resolve_paths(&config_dir(&a.config)?);
            commands::cmd_curves(cfg, &a.out, a.seed)?;
        }
        Command::Simulate(a) => {
            let mut cfg: config::SimulateConfig = config::load(&a.config)?;
            cfg.resolve_paths(&config_dir(&a.config)?);
            commands::cmd_simulate(cfg, &a.out, a.seed)?;
        }
        Command::Search(a) => {
            let cfg: config::SearchConfig = config::load(&a.config)?;
            commands::cmd_search(cfg, &a.out, a.seed)?;
        }
        Command::Rerun(a) => {
            commands::rerun(&a.manifest, a.out.as_deref())?;
        }
    }
    Ok(())
}
