//! Submission grading and the reproducibility taxonomy.

mod metrics;
mod outcome;
mod submission;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{compute_metric, Metric, MetricError, MetricId, MetricRegistry};
pub use outcome::{
    classify, classify_status, grade, report_error_status, score_deviation, ErrorStatus, GradeResult, Label,
    ReproOutcome, DEFAULT_TAU,
};
pub use submission::{validate_submission, GroundTruth, Violation};

#[derive(Debug, Error)]
pub enum GradeError {
    #[error("target score is zero; score deviation is undefined")]
    ZeroTarget,
    #[error("invalid competition spec: {0}")]
    InvalidSpec(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("ground truth: {0}")]
    GroundTruth(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Directionality {
    HigherBetter,
    LowerBetter,
}

impl Directionality {
    pub fn describe(self) -> &'static str {
        match self {
            Directionality::HigherBetter => "higher is better",
            Directionality::LowerBetter => "lower is better",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionSchema {
    pub id_column: String,
    /// Full ordered header, including the id column.
    pub columns: Vec<String>,
}

impl SubmissionSchema {
    pub fn prediction_columns(&self) -> impl Iterator<Item = &String> {
        self.columns.iter().filter(move |c| **c != self.id_column)
    }
}

/// A competition as configured on disk (TOML or JSON).
#[derive(Debug, Clone, Deserialize)]
struct CompetitionFile {
    id: String,
    #[serde(default)]
    description: String,
    metric: MetricId,
    #[serde(default)]
    directionality: Option<Directionality>,
    schema: SubmissionSchema,
    ground_truth: PathBuf,
    #[serde(default)]
    target_score: Option<f64>,
    #[serde(default = "default_submission_filename")]
    submission_filename: String,
    #[serde(default)]
    dataset_dir: Option<PathBuf>,
}

fn default_submission_filename() -> String {
    "submission.csv".into()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompetitionSpec {
    pub id: String,
    pub description: String,
    pub metric: MetricId,
    pub directionality: Directionality,
    pub schema: SubmissionSchema,
    pub ground_truth: PathBuf,
    /// Target score `s_t`. Competition files may omit it when every
    /// notebook supplies its own; see [`CompetitionSpec::with_target`].
    pub target_score: f64,
    pub submission_filename: String,
    pub dataset_dir: Option<PathBuf>,
}

impl CompetitionSpec {
    pub fn new(
        id: impl Into<String>,
        metric: MetricId,
        schema: SubmissionSchema,
        ground_truth: impl Into<PathBuf>,
        target_score: f64,
    ) -> Self {
        let directionality = MetricRegistry::default()
            .directionality(&metric)
            .unwrap_or(Directionality::HigherBetter);
        CompetitionSpec {
            id: id.into(),
            description: String::new(),
            metric,
            directionality,
            schema,
            ground_truth: ground_truth.into(),
            target_score,
            submission_filename: default_submission_filename(),
            dataset_dir: None,
        }
    }

    /// Loads a `.toml` or `.json` competition file. Relative paths are
    /// resolved against the file's directory. A missing target score is
    /// stored as NaN and must be supplied with [`Self::with_target`].
    pub fn load(path: &Path, registry: &MetricRegistry) -> Result<Self, GradeError> {
        let text = std::fs::read_to_string(path).map_err(|source| GradeError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let file: CompetitionFile = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)
                .map_err(|e| GradeError::InvalidSpec(format!("{}: {e}", path.display())))?,
            _ => toml::from_str(&text)
                .map_err(|e| GradeError::InvalidSpec(format!("{}: {e}", path.display())))?,
        };
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let directionality = match file.directionality {
            Some(d) => d,
            None => registry.directionality(&file.metric).ok_or_else(|| {
                GradeError::InvalidSpec(format!("unknown metric `{}`", file.metric))
            })?,
        };
        if !file.schema.columns.contains(&file.schema.id_column) {
            return Err(GradeError::InvalidSpec(format!(
                "id column `{}` not among schema columns",
                file.schema.id_column
            )));
        }
        let spec = CompetitionSpec {
            id: file.id,
            description: file.description,
            metric: file.metric,
            directionality,
            schema: file.schema,
            ground_truth: resolve(file.ground_truth),
            target_score: file.target_score.unwrap_or(f64::NAN),
            submission_filename: file.submission_filename,
            dataset_dir: file.dataset_dir.map(resolve),
        };
        if let Some(t) = file.target_score {
            spec.check_target(t)?;
        }
        Ok(spec)
    }

    fn check_target(&self, t: f64) -> Result<(), GradeError> {
        if t == 0.0 {
            Err(GradeError::ZeroTarget)
        } else if !t.is_finite() {
            Err(GradeError::InvalidSpec(format!("target score {t} is not finite")))
        } else {
            Ok(())
        }
    }

    /// Copy with a per-notebook target score.
    pub fn with_target(&self, target_score: f64) -> Result<Self, GradeError> {
        self.check_target(target_score)?;
        Ok(CompetitionSpec {
            target_score,
            ..self.clone()
        })
    }

    pub fn has_target(&self) -> bool {
        self.target_score.is_finite() && self.target_score != 0.0
    }

    #[cfg(test)]
    pub(crate) fn for_tests() -> Self {
        CompetitionSpec::new(
            "test-comp",
            MetricId::Accuracy,
            SubmissionSchema {
                id_column: "id".into(),
                columns: vec!["id".into(), "y".into()],
            },
            "truth.csv",
            1.0,
        )
    }
}
