//! Notebook execution under resource limits.
//!
//! Backends implement [`Executor`]. [`ContainerExecutor`] launches an OCI
//! container around the runner shim; [`MockExecutor`] replays canned reports
//! keyed by notebook content hash.

mod container;
mod mock;

use std::path::{Path, PathBuf};
use std::time::SystemTime;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backport::EnvironmentSpec;
use crate::grader::CompetitionSpec;
use crate::notebook::Notebook;

pub use container::{ContainerExecutor, RUNTIME_LINE_PREFIX, TIMEOUT_METADATA_KEY};
pub use mock::{CannedCellError, CannedReport, CannedSubmission, MockExecutor, MockFixture};

/// Dataset mount point inside the container.
pub const INPUT_DIR: &str = "/kaggle/input/";
/// Scratch directory where notebooks write their submission.
pub const WORKING_DIR: &str = "/kaggle/working/";

/// Cell index used for failures that happen before any cell runs
/// (pre-execution installs).
pub const PRE_EXECUTION_CELL: i64 = -1;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("executor backend unavailable: {0}")]
    ExecutorUnavailable(String),
    #[error("environment could not be materialized: {0}")]
    EnvironmentInstall(String),
    #[error("no canned report for notebook {0}")]
    UnknownNotebook(String),
    #[error("invalid limits: {0}")]
    InvalidLimits(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecLimits {
    /// Wall-clock budget in seconds for the notebook's own execution.
    pub wall_clock: f64,
    pub cpu_cores: u32,
    pub memory: u64,
    pub gpu_count: u32,
}

impl Default for ExecLimits {
    fn default() -> Self {
        ExecLimits {
            wall_clock: 600.0,
            cpu_cores: 4,
            memory: 30 * 1024 * 1024 * 1024,
            gpu_count: 1,
        }
    }
}

impl ExecLimits {
    pub fn validate(&self) -> Result<(), ExecError> {
        if !(self.wall_clock > 0.0 && self.wall_clock.is_finite()) {
            return Err(ExecError::InvalidLimits(format!(
                "wall_clock must be positive, got {}",
                self.wall_clock
            )));
        }
        if self.cpu_cores == 0 {
            return Err(ExecError::InvalidLimits("cpu_cores must be at least 1".into()));
        }
        if self.gpu_count == 0 {
            log::warn!("running without a GPU; notebooks expecting CUDA may slow down or fail");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Completed,
    Timeout,
    NotSaved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    /// Cell index, or [`PRE_EXECUTION_CELL`].
    pub index: i64,
    pub ok: bool,
    pub traceback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    /// Path relative to the working directory.
    pub path: PathBuf,
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionReport {
    pub status: ExecStatus,
    /// Seconds spent executing the notebook itself.
    pub runtime: f64,
    pub cell_results: Vec<CellResult>,
    pub submission: Option<Submission>,
    pub executed_notebook: Notebook,
    pub env_fingerprint: String,
    /// Outputs were salvaged from an interrupted run.
    pub partial: bool,
}

impl ExecutionReport {
    pub fn has_errors(&self) -> bool {
        self.cell_results.iter().any(|c| !c.ok)
    }

    pub fn error_tracebacks(&self) -> impl Iterator<Item = (i64, &str)> {
        self.cell_results
            .iter()
            .filter_map(|c| c.traceback.as_deref().map(|tb| (c.index, tb)))
    }

    pub fn install_failures(&self) -> impl Iterator<Item = &str> {
        self.cell_results
            .iter()
            .filter(|c| c.index == PRE_EXECUTION_CELL)
            .filter_map(|c| c.traceback.as_deref())
    }
}

pub trait Executor: Send + Sync {
    fn execute(
        &self,
        nb: &Notebook,
        comp: &CompetitionSpec,
        limits: &ExecLimits,
        env: &EnvironmentSpec,
    ) -> Result<ExecutionReport, ExecError>;
}

/// Per-cell results read off an executed notebook, followed by any
/// pre-execution install failures.
pub fn cell_results_from(executed: &Notebook, install_failures: &[String]) -> Vec<CellResult> {
    let mut results: Vec<CellResult> = install_failures
        .iter()
        .map(|tb| CellResult {
            index: PRE_EXECUTION_CELL,
            ok: false,
            traceback: Some(tb.clone()),
        })
        .collect();
    results.extend(executed.cells.iter().map(|cell| {
        let traceback = cell.traceback();
        CellResult {
            index: cell.index as i64,
            ok: traceback.is_none(),
            traceback,
        }
    }));
    results
}

/// Enforces report invariants shared by every backend: a run at or over the
/// wall-clock budget is a timeout, a timeout carries no submission and
/// reports at least the budget as runtime, and a submission needs at least
/// one cell result.
pub fn finalize_report(mut report: ExecutionReport, limits: &ExecLimits) -> ExecutionReport {
    if report.status == ExecStatus::Completed && report.runtime >= limits.wall_clock {
        report.status = ExecStatus::Timeout;
    }
    if report.status == ExecStatus::Timeout {
        report.runtime = report.runtime.max(limits.wall_clock);
        report.submission = None;
        report.partial = true;
    }
    if report.status == ExecStatus::NotSaved || report.cell_results.is_empty() {
        report.submission = None;
    }
    report
}

fn modified(path: &Path) -> SystemTime {
    path.metadata()
        .and_then(|m| m.modified())
        .unwrap_or(SystemTime::UNIX_EPOCH)
}

/// Picks the submission CSV under `workdir`: a file named `expected_name`
/// wins over any other CSV; among equals the most recently modified one is
/// chosen (ties broken by path).
pub fn collect_submission(workdir: &Path, expected_name: &str) -> Option<Submission> {
    let mut csvs: Vec<(bool, SystemTime, PathBuf)> = walkdir::WalkDir::new(workdir)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .filter(|e| {
            e.path()
                .extension()
                .is_some_and(|x| x.eq_ignore_ascii_case("csv"))
        })
        .map(|e| {
            let path = e.into_path();
            let exact = path.file_name().is_some_and(|n| n == expected_name);
            (exact, modified(&path), path)
        })
        .collect();
    csvs.sort_by(|a, b| (a.0, a.1, &b.2).cmp(&(b.0, b.1, &a.2)));
    let (_, _, path) = csvs.pop()?;
    let payload = match std::fs::read_to_string(&path) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("cannot read submission {}: {e}", path.display());
            return None;
        }
    };
    let rel = path.strip_prefix(workdir).unwrap_or(&path).to_path_buf();
    Some(Submission { path: rel, payload })
}
