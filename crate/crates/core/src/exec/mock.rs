use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    cell_results_from, finalize_report, ExecError, ExecLimits, ExecStatus, ExecutionReport,
    Executor, Submission,
};
use crate::backport::EnvironmentSpec;
use crate::grader::CompetitionSpec;
use crate::notebook::{extract_pip_installs, CellOutput, Notebook};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CannedCellError {
    pub index: usize,
    pub traceback: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CannedSubmission {
    #[serde(default = "default_submission_path")]
    pub path: PathBuf,
    pub content: String,
}

fn default_submission_path() -> PathBuf {
    PathBuf::from("submission.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CannedReport {
    #[serde(default = "default_status")]
    pub status: ExecStatus,
    #[serde(default)]
    pub runtime: f64,
    /// Cells that raise; every other cell succeeds.
    #[serde(default)]
    pub errors: Vec<CannedCellError>,
    #[serde(default)]
    pub submission: Option<CannedSubmission>,
    #[serde(default)]
    pub env: String,
}

fn default_status() -> ExecStatus {
    ExecStatus::Completed
}

/// Mock fixture file: canned reports keyed by [`Notebook::content_hash`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockFixture {
    #[serde(default)]
    pub reports: BTreeMap<String, CannedReport>,
    /// Used for notebooks without an entry.
    #[serde(default)]
    pub default: Option<CannedReport>,
    /// Normalized package names whose pre-execution install fails.
    #[serde(default)]
    pub failing_installs: Vec<String>,
    /// When set, every environment with an interpreter pin fails to
    /// materialize.
    #[serde(default)]
    pub fail_backported_envs: bool,
}

/// Deterministic executor replaying [`MockFixture`] entries.
#[derive(Debug, Clone, Default)]
pub struct MockExecutor {
    fixture: MockFixture,
}

impl MockExecutor {
    pub fn new(fixture: MockFixture) -> Self {
        MockExecutor { fixture }
    }

    pub fn from_file(path: &Path) -> Result<Self, ExecError> {
        let text = std::fs::read_to_string(path)?;
        let fixture = serde_json::from_str(&text).map_err(|e| {
            ExecError::ExecutorUnavailable(format!("bad mock fixture {}: {e}", path.display()))
        })?;
        Ok(MockExecutor::new(fixture))
    }

    pub fn insert(&mut self, nb: &Notebook, report: CannedReport) {
        self.fixture.reports.insert(nb.content_hash(), report);
    }

    pub fn fixture(&self) -> &MockFixture {
        &self.fixture
    }
}

impl Executor for MockExecutor {
    fn execute(
        &self,
        nb: &Notebook,
        _comp: &CompetitionSpec,
        limits: &ExecLimits,
        env: &EnvironmentSpec,
    ) -> Result<ExecutionReport, ExecError> {
        limits.validate()?;
        if env.interpreter.is_some() && self.fixture.fail_backported_envs {
            return Err(ExecError::EnvironmentInstall(
                "scripted materialization failure".into(),
            ));
        }
        let hash = nb.content_hash();
        let canned = self
            .fixture
            .reports
            .get(&hash)
            .or(self.fixture.default.as_ref())
            .ok_or(ExecError::UnknownNotebook(hash))?;

        let install_failures: Vec<String> = extract_pip_installs(nb)
            .into_iter()
            .filter(|r| self.fixture.failing_installs.contains(&r.package))
            .map(|r| {
                format!(
                    "ERROR: Could not install `{r}`\nInstallError: no matching distribution for {r}"
                )
            })
            .collect();

        let mut executed = nb.without_outputs();
        if canned.status != ExecStatus::NotSaved {
            for err in &canned.errors {
                if let Some(cell) = executed.cells.get_mut(err.index) {
                    cell.outputs.push(CellOutput::error(err.traceback.clone()));
                } else {
                    log::warn!("canned error for missing cell {}", err.index);
                }
            }
        }

        let report = ExecutionReport {
            status: canned.status,
            runtime: canned.runtime,
            cell_results: cell_results_from(&executed, &install_failures),
            submission: canned.submission.as_ref().map(|s| Submission {
                path: s.path.clone(),
                payload: s.content.clone(),
            }),
            executed_notebook: executed,
            env_fingerprint: canned.env.clone(),
            partial: false,
        };
        Ok(finalize_report(report, limits))
    }
}
