//! Batch driver over a directory of notebooks: baseline re-execution,
//! environment backporting, LLM-driven modernization and reporting.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod corpus;

pub use config::{ExecutorKind, GatewayKind, RunArgs, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nbrevive", version, about = "Re-execute, backport and repair ML notebooks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute and grade every notebook once.
    Baseline(RunArgs),
    /// Pin an interpreter and package versions for each notebook's submission date.
    Backport(RunArgs),
    /// Run repair sessions on notebooks that do not reproduce.
    Modernize(RunArgs),
    /// Build analytics tables from session logs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory of `*.jsonl` session logs.
    #[arg(long)]
    pub logs: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

/// Runs one subcommand and returns the run directory it wrote to.
pub fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let args = match &cli.command {
        Command::Baseline(a) | Command::Backport(a) | Command::Modernize(a) => a,
        Command::Report(r) => &r.run,
    };
    let cfg = RunConfig::resolve(args)?;
    log::debug!("{cfg:?}");
    // commands create the run directory on first write
    let out = cfg.run_dir();
    match &cli.command {
        Command::Baseline(_) => commands::baseline(&cfg, &out)?,
        Command::Backport(_) => commands::backport(&cfg, &out)?,
        Command::Modernize(_) => commands::modernize(&cfg, &out)?,
        Command::Report(r) => commands::report(&cfg, &r.logs, &out)?,
    }
    Ok(out)
}
