//! The modernization loop: triage, prompting, response parsing and the
//! per-notebook session.

mod prompt;
mod response;
mod session;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{ExecStatus, ExecutionReport};
use crate::notebook::NotebookError;

pub use prompt::{build_prompt, Prompt, PromptInput, Scores, DEFAULT_TOKEN_CUTOFF, RESPONSE_FORMAT};
pub use response::parse_response;
pub use session::{
    run_session, FixRecord, LogLine, SessionConfig, SessionContext, SessionLog, SessionStats,
    TerminalRecord,
};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("prompt has {tokens} tokens, above the cutoff of {cutoff}")]
    TokenBudgetExceeded { tokens: usize, cutoff: usize },
    #[error("response contains no complete code block")]
    NoCodeBlock,
    #[error(transparent)]
    PatchParse(#[from] NotebookError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixType {
    RuntimeReduction,
    ErrorRepair,
    ScoreCalibration,
}

impl FixType {
    pub const ALL: [FixType; 3] = [
        FixType::RuntimeReduction,
        FixType::ErrorRepair,
        FixType::ScoreCalibration,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FixType::RuntimeReduction => "runtime_reduction",
            FixType::ErrorRepair => "error_repair",
            FixType::ScoreCalibration => "score_calibration",
        }
    }
}

impl fmt::Display for FixType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How much of the notebook an error-repair prompt shows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    #[serde(alias = "file")]
    FileLevel,
    #[serde(alias = "cell")]
    CellLevel,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "file" | "file_level" => Ok(Mode::FileLevel),
            "cell" | "cell_level" => Ok(Mode::CellLevel),
            other => Err(format!("unknown mode `{other}` (expected file or cell)")),
        }
    }
}

/// Chooses the fix for a non-reproducible run: timeouts need runtime
/// reduction, runs with errors (or without a saved notebook) need error
/// repair, and error-free runs need score calibration. Error-free runs
/// without a submission also land in score calibration; the prompt then
/// notes the missing file.
pub fn classify_issue(report: &ExecutionReport, _delta_s: Option<f64>, _tau: f64) -> FixType {
    match report.status {
        ExecStatus::Timeout => FixType::RuntimeReduction,
        ExecStatus::NotSaved => FixType::ErrorRepair,
        ExecStatus::Completed if report.has_errors() => FixType::ErrorRepair,
        ExecStatus::Completed => FixType::ScoreCalibration,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{CellResult, Submission};
    use crate::notebook::Notebook;

    fn report(status: ExecStatus, error: bool, csv: bool) -> ExecutionReport {
        ExecutionReport {
            status,
            runtime: 1.0,
            cell_results: vec![CellResult {
                index: 0,
                ok: !error,
                traceback: error.then(|| "ValueError: bad".into()),
            }],
            submission: csv.then(|| Submission {
                path: "submission.csv".into(),
                payload: "id\n".into(),
            }),
            executed_notebook: Notebook::default(),
            env_fingerprint: String::new(),
            partial: false,
        }
    }

    #[test]
    fn triage_rules() {
        assert_eq!(
            classify_issue(&report(ExecStatus::Timeout, false, false), None, 0.1),
            FixType::RuntimeReduction
        );
        assert_eq!(
            classify_issue(&report(ExecStatus::Completed, true, true), Some(0.3), 0.1),
            FixType::ErrorRepair
        );
        assert_eq!(
            classify_issue(&report(ExecStatus::Completed, false, true), Some(0.2), 0.1),
            FixType::ScoreCalibration
        );
        assert_eq!(
            classify_issue(&report(ExecStatus::Completed, false, false), None, 0.1),
            FixType::ScoreCalibration
        );
        assert_eq!(
            classify_issue(&report(ExecStatus::NotSaved, false, false), None, 0.1),
            FixType::ErrorRepair
        );
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("cell".parse::<Mode>().unwrap(), Mode::CellLevel);
        assert_eq!("file_level".parse::<Mode>().unwrap(), Mode::FileLevel);
        assert!("line".parse::<Mode>().is_err());
    }
}
