use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::stats::{cliffs_delta, kendall_tau};
use crate::agent::{FixType, SessionLog};
use crate::grader::{ErrorStatus, Label};
use crate::notebook::exception_class_of;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorType {
    NameError,
    AttributeError,
    ValueError,
    KeyError,
    TypeError,
    Others,
}

impl ErrorType {
    pub const ALL: [ErrorType; 6] = [
        ErrorType::NameError,
        ErrorType::AttributeError,
        ErrorType::ValueError,
        ErrorType::KeyError,
        ErrorType::TypeError,
        ErrorType::Others,
    ];
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Classifies a traceback (or its final line) by the exception class on
/// its last non-empty line. Module prefixes are ignored.
pub fn classify_error(traceback: &str) -> ErrorType {
    match exception_class_of(traceback).as_deref() {
        Some("NameError") => ErrorType::NameError,
        Some("AttributeError") => ErrorType::AttributeError,
        Some("ValueError") => ErrorType::ValueError,
        Some("KeyError") => ErrorType::KeyError,
        Some("TypeError") => ErrorType::TypeError,
        _ => ErrorType::Others,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTypeRow {
    pub error_type: ErrorType,
    /// Errors raised by the baseline runs.
    pub baseline: u64,
    /// Errors raised right after any fix.
    pub after_fix: u64,
    /// Errors left when the sessions ended.
    pub terminal: u64,
}

pub fn error_type_counts(logs: &[SessionLog]) -> Vec<ErrorTypeRow> {
    let mut counts: BTreeMap<ErrorType, [u64; 3]> = ErrorType::ALL.iter().map(|&t| (t, [0; 3])).collect();
    let mut bump = |tb: &str, col: usize| counts.get_mut(&classify_error(tb)).unwrap()[col] += 1;
    for log in logs {
        if let Some(t) = log.terminal() {
            t.stats.baseline_errors.iter().for_each(|e| bump(e, 0));
            t.final_errors.iter().for_each(|e| bump(e, 2));
        }
        for r in log.records() {
            r.post_errors.iter().for_each(|e| bump(e, 1));
        }
    }
    counts
        .into_iter()
        .map(|(error_type, [baseline, after_fix, terminal])| ErrorTypeRow {
            error_type,
            baseline,
            after_fix,
            terminal,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub notebook_id: String,
    pub iteration: usize,
    pub fix_type: FixType,
    pub edit_sim_prev: f64,
    pub edit_sim_baseline: f64,
}

/// Mean similarities over all sessions that applied a patch at fix `fix`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityPoint {
    pub fix: usize,
    pub sessions: usize,
    pub mean_edit_sim_baseline: f64,
    pub mean_edit_sim_prev: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilarityCurves {
    pub points: Vec<SimilarityPoint>,
    pub rows: Vec<SimilarityRow>,
}

/// Only records whose patch was applied contribute.
pub fn similarity_curves(logs: &[SessionLog]) -> SimilarityCurves {
    let mut rows = Vec::new();
    let mut by_fix: BTreeMap<usize, (usize, f64, f64)> = BTreeMap::new();
    for log in logs {
        for r in log.records().iter().filter(|r| r.patch_applied) {
            rows.push(SimilarityRow {
                notebook_id: log.notebook_id.clone(),
                iteration: r.iteration,
                fix_type: r.fix_type,
                edit_sim_prev: r.edit_sim_prev,
                edit_sim_baseline: r.edit_sim_baseline,
            });
            let e = by_fix.entry(r.iteration).or_default();
            e.0 += 1;
            e.1 += r.edit_sim_baseline;
            e.2 += r.edit_sim_prev;
        }
    }
    let points = by_fix
        .into_iter()
        .map(|(fix, (n, base, prev))| SimilarityPoint {
            fix,
            sessions: n,
            mean_edit_sim_baseline: base / n as f64,
            mean_edit_sim_prev: prev / n as f64,
        })
        .collect();
    SimilarityCurves { points, rows }
}

/// Groups of sessions that ended reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReproGroup {
    ErrorfreeRepro,
    ErrorRepro,
    AllRepro,
}

impl ReproGroup {
    pub const ALL: [ReproGroup; 3] = [ReproGroup::ErrorfreeRepro, ReproGroup::ErrorRepro, ReproGroup::AllRepro];

    fn contains(self, status: ErrorStatus) -> bool {
        match self {
            ReproGroup::ErrorfreeRepro => status == ErrorStatus::ErrorFree,
            ReproGroup::ErrorRepro => status == ErrorStatus::Error,
            ReproGroup::AllRepro => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixCountRow {
    pub notebook_id: String,
    pub terminal_status: ErrorStatus,
    pub terminal_label: Label,
    pub fixes: usize,
    pub cells: usize,
    pub loc: usize,
    pub baseline_errors: usize,
}

pub fn fix_counts(logs: &[SessionLog]) -> Vec<FixCountRow> {
    logs.iter()
        .filter_map(|log| {
            let t = log.terminal()?;
            Some(FixCountRow {
                notebook_id: log.notebook_id.clone(),
                terminal_status: t.terminal.error_status,
                terminal_label: t.terminal.label,
                fixes: log.records().len(),
                cells: t.stats.cells,
                loc: t.stats.loc,
                baseline_errors: t.stats.baseline_errors.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixHistogramRow {
    pub group: ReproGroup,
    pub fixes: usize,
    pub notebooks: u64,
}

/// Distribution of the number of fixes among reproduced notebooks.
pub fn fix_histogram(rows: &[FixCountRow]) -> Vec<FixHistogramRow> {
    let mut out = Vec::new();
    for group in ReproGroup::ALL {
        let mut hist: BTreeMap<usize, u64> = BTreeMap::new();
        for r in rows
            .iter()
            .filter(|r| r.terminal_label == Label::Reproducible && group.contains(r.terminal_status))
        {
            *hist.entry(r.fixes).or_default() += 1;
        }
        out.extend(hist.into_iter().map(|(fixes, notebooks)| FixHistogramRow { group, fixes, notebooks }));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Cells,
    Loc,
    BaselineErrors,
}

impl Feature {
    pub const ALL: [Feature; 3] = [Feature::Cells, Feature::Loc, Feature::BaselineErrors];

    fn of(self, r: &FixCountRow) -> f64 {
        match self {
            Feature::Cells => r.cells as f64,
            Feature::Loc => r.loc as f64,
            Feature::BaselineErrors => r.baseline_errors as f64,
        }
    }
}

/// Association between the number of fixes and a notebook feature.
/// `cliffs_delta` compares the feature in sessions needing more fixes than
/// the group median against the rest; undefined statistics are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub group: ReproGroup,
    pub feature: Feature,
    pub n: usize,
    pub kendall_tau: Option<f64>,
    pub cliffs_delta: Option<f64>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

pub fn fix_correlations(rows: &[FixCountRow]) -> Vec<CorrelationRow> {
    let mut out = Vec::new();
    for group in ReproGroup::ALL {
        let members: Vec<&FixCountRow> = rows
            .iter()
            .filter(|r| r.terminal_label == Label::Reproducible && group.contains(r.terminal_status))
            .collect();
        let fixes: Vec<f64> = members.iter().map(|r| r.fixes as f64).collect();
        let mut sorted = fixes.clone();
        sorted.sort_by(f64::total_cmp);
        let cut = (!sorted.is_empty()).then(|| median(&sorted));
        for feature in Feature::ALL {
            let values: Vec<f64> = members.iter().map(|r| feature.of(r)).collect();
            let cliff = cut.and_then(|m| {
                let pairs = fixes.iter().zip(&values);
                let hi: Vec<f64> = pairs.clone().filter(|(f, _)| **f > m).map(|p| *p.1).collect();
                let lo: Vec<f64> = pairs.filter(|(f, _)| **f <= m).map(|p| *p.1).collect();
                cliffs_delta(&hi, &lo).ok()
            });
            out.push(CorrelationRow {
                group,
                feature,
                n: members.len(),
                kendall_tau: kendall_tau(&fixes, &values).ok(),
                cliffs_delta: cliff,
            });
        }
    }
    out
}
