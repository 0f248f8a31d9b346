use serde::{Deserialize, Serialize};

use crate::agent::{FixType, SessionLog};
use crate::grader::{ErrorStatus, Label, ReproOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputStatus {
    Csv,
    NoCsv,
    #[serde(rename = "-")]
    NotApplicable,
}

/// Where the score deviation fell relative to the tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationBand {
    WithinTau,
    BeyondTau,
    #[serde(rename = "-")]
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub error_status: ErrorStatus,
    pub output: OutputStatus,
    pub deviation: DeviationBand,
    pub label: Label,
    pub count: u64,
}

/// Outcome counts. Always lists the ten possible cells in a fixed order, so
/// every outcome lands in exactly one row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTable {
    pub rows: Vec<OutcomeRow>,
    pub total: u64,
}

fn cell_of(o: &ReproOutcome) -> (ErrorStatus, OutputStatus, DeviationBand) {
    if !o.error_status.ran() {
        return (o.error_status, OutputStatus::NotApplicable, DeviationBand::NotApplicable);
    }
    if !o.has_csv {
        return (o.error_status, OutputStatus::NoCsv, DeviationBand::NotApplicable);
    }
    let band = if o.label == Label::Reproducible {
        DeviationBand::WithinTau
    } else {
        DeviationBand::BeyondTau
    };
    (o.error_status, OutputStatus::Csv, band)
}

impl OutcomeTable {
    pub fn from_outcomes<'a>(outcomes: impl IntoIterator<Item = &'a ReproOutcome>) -> Self {
        let mut rows = Vec::with_capacity(10);
        for status in [ErrorStatus::ErrorFree, ErrorStatus::Error] {
            for (output, deviation, label) in [
                (OutputStatus::Csv, DeviationBand::WithinTau, Label::Reproducible),
                (OutputStatus::Csv, DeviationBand::BeyondTau, Label::NonReproducible),
                (OutputStatus::NoCsv, DeviationBand::NotApplicable, Label::NonReproducible),
            ] {
                rows.push(OutcomeRow { error_status: status, output, deviation, label, count: 0 });
            }
        }
        for status in [
            ErrorStatus::Timeout,
            ErrorStatus::NotSaved,
            ErrorStatus::LlmFailed,
            ErrorStatus::BackportFailed,
        ] {
            rows.push(OutcomeRow {
                error_status: status,
                output: OutputStatus::NotApplicable,
                deviation: DeviationBand::NotApplicable,
                label: Label::Failed,
                count: 0,
            });
        }
        let mut total = 0;
        for o in outcomes {
            let key = cell_of(o);
            let row = rows
                .iter_mut()
                .find(|r| (r.error_status, r.output, r.deviation) == key)
                .expect("every outcome maps to a row");
            row.count += 1;
            total += 1;
        }
        OutcomeTable { rows, total }
    }

    pub fn count(&self, status: ErrorStatus, output: OutputStatus, deviation: DeviationBand) -> u64 {
        self.rows
            .iter()
            .find(|r| r.error_status == status && r.output == output && r.deviation == deviation)
            .map_or(0, |r| r.count)
    }

    pub fn reproducible(&self) -> u64 {
        self.rows.iter().filter(|r| r.label == Label::Reproducible).map(|r| r.count).sum()
    }
}

/// Post-fix state columns of the transition matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostState {
    Timeout,
    ErrorNonrepro,
    ErrorfreeNonrepro,
    ErrorRepro,
    ErrorfreeRepro,
    /// not_saved, llm_failed or backport_failed after the fix.
    OtherFailed,
}

impl PostState {
    pub const ALL: [PostState; 6] = [
        PostState::Timeout,
        PostState::ErrorNonrepro,
        PostState::ErrorfreeNonrepro,
        PostState::ErrorRepro,
        PostState::ErrorfreeRepro,
        PostState::OtherFailed,
    ];

    pub fn of(o: &ReproOutcome) -> PostState {
        let repro = o.label == Label::Reproducible;
        match o.error_status {
            ErrorStatus::Timeout => PostState::Timeout,
            ErrorStatus::Error if repro => PostState::ErrorRepro,
            ErrorStatus::Error => PostState::ErrorNonrepro,
            ErrorStatus::ErrorFree if repro => PostState::ErrorfreeRepro,
            ErrorStatus::ErrorFree => PostState::ErrorfreeNonrepro,
            _ => PostState::OtherFailed,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PostState::Timeout => "timeout",
            PostState::ErrorNonrepro => "error_nonrepro",
            PostState::ErrorfreeNonrepro => "errorfree_nonrepro",
            PostState::ErrorRepro => "error_repro",
            PostState::ErrorfreeRepro => "errorfree_repro",
            PostState::OtherFailed => "other_failed",
        }
    }

    fn column(self) -> usize {
        PostState::ALL.iter().position(|&p| p == self).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRow {
    pub fix_type: FixType,
    pub total: u64,
    pub timeout: u64,
    pub error_nonrepro: u64,
    pub errorfree_nonrepro: u64,
    pub error_repro: u64,
    pub errorfree_repro: u64,
    pub other_failed: u64,
}

/// Fix type against the state reached right after the fix.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    counts: [[u64; 6]; 3],
}

impl TransitionMatrix {
    pub fn from_logs<'a>(logs: impl IntoIterator<Item = &'a SessionLog>) -> Self {
        let mut m = TransitionMatrix::default();
        for log in logs {
            for r in log.records() {
                m.add(r.fix_type, PostState::of(&r.post_state));
            }
        }
        m
    }

    pub fn add(&mut self, fix: FixType, post: PostState) {
        self.counts[fix as usize][post.column()] += 1;
    }

    pub fn get(&self, fix: FixType, post: PostState) -> u64 {
        self.counts[fix as usize][post.column()]
    }

    pub fn row_total(&self, fix: FixType) -> u64 {
        self.counts[fix as usize].iter().sum()
    }

    pub fn rows(&self) -> Vec<TransitionRow> {
        FixType::ALL
            .iter()
            .map(|&fix| {
                let c = self.counts[fix as usize];
                TransitionRow {
                    fix_type: fix,
                    total: c.iter().sum(),
                    timeout: c[0],
                    error_nonrepro: c[1],
                    errorfree_nonrepro: c[2],
                    error_repro: c[3],
                    errorfree_repro: c[4],
                    other_failed: c[5],
                }
            })
            .collect()
    }
}
