use std::fmt;

use serde::{Deserialize, Serialize};

use super::{validate_submission, CompetitionSpec, GradeError, GroundTruth, MetricRegistry, Violation};
use crate::exec::{ExecStatus, ExecutionReport};

pub const DEFAULT_TAU: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorStatus {
    ErrorFree,
    Error,
    Timeout,
    NotSaved,
    LlmFailed,
    BackportFailed,
}

impl ErrorStatus {
    pub const ALL: [ErrorStatus; 6] = [
        ErrorStatus::ErrorFree,
        ErrorStatus::Error,
        ErrorStatus::Timeout,
        ErrorStatus::NotSaved,
        ErrorStatus::LlmFailed,
        ErrorStatus::BackportFailed,
    ];

    /// Statuses where the notebook ran to completion.
    pub fn ran(self) -> bool {
        matches!(self, ErrorStatus::ErrorFree | ErrorStatus::Error)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorStatus::ErrorFree => "error_free",
            ErrorStatus::Error => "error",
            ErrorStatus::Timeout => "timeout",
            ErrorStatus::NotSaved => "not_saved",
            ErrorStatus::LlmFailed => "llm_failed",
            ErrorStatus::BackportFailed => "backport_failed",
        }
    }
}

impl fmt::Display for ErrorStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Reproducible,
    NonReproducible,
    Failed,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReproOutcome {
    pub error_status: ErrorStatus,
    pub has_csv: bool,
    #[serde(default)]
    pub delta_s: Option<f64>,
    pub label: Label,
}

impl ReproOutcome {
    /// Outcome for runs that never produced a gradable execution.
    pub fn failed(error_status: ErrorStatus) -> Self {
        ReproOutcome {
            error_status,
            has_csv: false,
            delta_s: None,
            label: Label::Failed,
        }
    }

    pub fn is_reproducible(&self) -> bool {
        self.label == Label::Reproducible
    }
}

/// Relative score deviation `|s_r - s_t| / |s_t|`.
pub fn score_deviation(s_r: f64, s_t: f64) -> Result<f64, GradeError> {
    if s_t == 0.0 {
        return Err(GradeError::ZeroTarget);
    }
    Ok((s_r - s_t).abs() / s_t.abs())
}

/// The outcome taxonomy. `delta_s` is only meaningful with a graded CSV and
/// is dropped otherwise.
pub fn classify_status(
    error_status: ErrorStatus,
    has_csv: bool,
    delta_s: Option<f64>,
    tau: f64,
) -> ReproOutcome {
    if !error_status.ran() {
        return ReproOutcome::failed(error_status);
    }
    let delta_s = if has_csv { delta_s } else { None };
    let label = match delta_s {
        Some(d) if d <= tau => Label::Reproducible,
        _ => Label::NonReproducible,
    };
    ReproOutcome {
        error_status,
        has_csv: has_csv && delta_s.is_some(),
        delta_s,
        label,
    }
}

pub fn report_error_status(report: &ExecutionReport) -> ErrorStatus {
    match report.status {
        ExecStatus::Timeout => ErrorStatus::Timeout,
        ExecStatus::NotSaved => ErrorStatus::NotSaved,
        ExecStatus::Completed if report.has_errors() => ErrorStatus::Error,
        ExecStatus::Completed => ErrorStatus::ErrorFree,
    }
}

/// Classifies a report; `delta_s` must be present exactly when the report
/// carries a valid graded submission.
pub fn classify(report: &ExecutionReport, delta_s: Option<f64>, tau: f64) -> ReproOutcome {
    let has_csv = report.submission.is_some() && delta_s.is_some();
    classify_status(report_error_status(report), has_csv, delta_s, tau)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeResult {
    pub outcome: ReproOutcome,
    /// Reproduced score `s_r`, when the submission could be graded.
    pub score: Option<f64>,
    pub violations: Vec<Violation>,
}

/// Validates and scores the report's submission, then classifies the run.
/// Malformed submissions count as "no CSV".
pub fn grade(
    report: &ExecutionReport,
    comp: &CompetitionSpec,
    truth: &GroundTruth,
    registry: &MetricRegistry,
    tau: f64,
) -> Result<GradeResult, GradeError> {
    let mut violations = Vec::new();
    let mut score = None;
    let mut delta_s = None;
    if let (ExecStatus::Completed, Some(sub)) = (report.status, &report.submission) {
        let metric = registry.get(&comp.metric)?;
        match validate_submission(&sub.payload, &comp.schema, truth, metric.numeric()) {
            Ok(pred) => match metric.score(&pred, &truth.rows) {
                Ok(s) => {
                    delta_s = Some(score_deviation(s, comp.target_score)?);
                    score = Some(s);
                }
                Err(e) => {
                    log::warn!("submission for {} not scorable: {e}", comp.id);
                    violations.push(Violation::UnscorableValues {
                        message: e.to_string(),
                    });
                }
            },
            Err(v) => violations = v,
        }
    }
    Ok(GradeResult {
        outcome: classify(report, delta_s, tau),
        score,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{CellResult, Submission};
    use crate::grader::{MetricId, SubmissionSchema};
    use crate::notebook::Notebook;

    fn report(status: ExecStatus, error: bool, csv: Option<&str>) -> ExecutionReport {
        ExecutionReport {
            status,
            runtime: 1.0,
            cell_results: vec![CellResult {
                index: 0,
                ok: !error,
                traceback: error.then(|| "NameError: x".to_string()),
            }],
            submission: csv.map(|c| Submission {
                path: "submission.csv".into(),
                payload: c.into(),
            }),
            executed_notebook: Notebook::default(),
            env_fingerprint: String::new(),
            partial: false,
        }
    }

    #[test]
    fn fig6_deviation() {
        let d = score_deviation(0.93778, 0.87511).unwrap();
        assert!((d - 0.0716).abs() < 1e-4);
        assert_eq!(score_deviation(0.5, 1.0).unwrap(), 0.5);
        assert!(matches!(score_deviation(1.0, 0.0), Err(GradeError::ZeroTarget)));
    }

    #[test]
    fn classify_examples() {
        let r = report(ExecStatus::Completed, false, Some("x"));
        assert_eq!(classify(&r, Some(0.05), DEFAULT_TAU).label, Label::Reproducible);
        let r = report(ExecStatus::Completed, true, None);
        let o = classify(&r, None, DEFAULT_TAU);
        assert_eq!((o.error_status, o.label), (ErrorStatus::Error, Label::NonReproducible));
        let r = report(ExecStatus::Timeout, false, None);
        assert_eq!(classify(&r, None, DEFAULT_TAU).label, Label::Failed);
    }

    #[test]
    fn boundary_is_inclusive() {
        let o = classify_status(ErrorStatus::ErrorFree, true, Some(0.10), 0.10);
        assert_eq!(o.label, Label::Reproducible);
    }

    fn comp() -> CompetitionSpec {
        CompetitionSpec::new(
            "c",
            MetricId::Accuracy,
            SubmissionSchema {
                id_column: "id".into(),
                columns: vec!["id".into(), "y".into()],
            },
            "t.csv",
            0.5,
        )
    }

    #[test]
    fn grade_scores_and_rejects_malformed() {
        let comp = comp();
        let truth = GroundTruth::from_csv("id,y\n1,a\n2,b\n", &comp.schema).unwrap();
        let reg = MetricRegistry::default();
        let good = report(ExecStatus::Completed, false, Some("id,y\n1,a\n2,c\n"));
        let g = grade(&good, &comp, &truth, &reg, DEFAULT_TAU).unwrap();
        assert_eq!(g.score, Some(0.5));
        assert_eq!(g.outcome.label, Label::Reproducible);

        let bad = report(ExecStatus::Completed, false, Some("id,z\n1,a\n2,c\n"));
        let g = grade(&bad, &comp, &truth, &reg, DEFAULT_TAU).unwrap();
        assert!(!g.outcome.has_csv);
        assert_eq!(g.outcome.label, Label::NonReproducible);
        assert!(!g.violations.is_empty());
    }
}
