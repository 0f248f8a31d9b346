//! Aggregation over session logs: outcome tables, fix transitions, error
//! types, similarity curves, fix-count correlations and cost.

mod cost;
mod series;
mod stats;
mod tables;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::SessionLog;
use crate::llm::PriceTable;

pub use cost::{cost_report, CostRow, CostScope};
pub use series::{
    classify_error, error_type_counts, fix_correlations, fix_counts, fix_histogram, similarity_curves,
    CorrelationRow, ErrorType, ErrorTypeRow, Feature, FixCountRow, FixHistogramRow, ReproGroup, SimilarityCurves,
    SimilarityPoint, SimilarityRow,
};
pub use stats::{cliffs_delta, kendall_tau, StatsError};
pub use tables::{DeviationBand, OutcomeRow, OutcomeTable, OutputStatus, PostState, TransitionMatrix, TransitionRow};

/// Logs read from a directory of `*.jsonl` files.
#[derive(Debug, Default)]
pub struct LoadedLogs {
    pub logs: Vec<SessionLog>,
    /// Lines that failed to parse.
    pub skipped_lines: usize,
    /// Files without a terminal record.
    pub incomplete: Vec<PathBuf>,
}

/// Reads every `*.jsonl` file directly under `dir`, sorted by notebook id.
/// A missing directory is an error; corrupt lines are skipped and counted.
pub fn load_logs(dir: &Path) -> io::Result<LoadedLogs> {
    if !dir.is_dir() {
        return Err(io::Error::new(
            io::ErrorKind::NotFound,
            format!("logs directory {} does not exist", dir.display()),
        ));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut out = LoadedLogs::default();
    for path in paths {
        let (log, skipped) = SessionLog::read_jsonl(&path)?;
        out.skipped_lines += skipped;
        match log {
            Some(l) => out.logs.push(l),
            None => out.incomplete.push(path),
        }
    }
    out.logs.sort_by(|a, b| a.notebook_id.cmp(&b.notebook_id));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsReport {
    pub sessions: usize,
    pub skipped_lines: usize,
    pub baseline_outcomes: OutcomeTable,
    pub terminal_outcomes: OutcomeTable,
    pub transitions: Vec<TransitionRow>,
    pub error_types: Vec<ErrorTypeRow>,
    pub similarity: SimilarityCurves,
    pub fix_counts: Vec<FixCountRow>,
    pub fix_histogram: Vec<FixHistogramRow>,
    pub correlations: Vec<CorrelationRow>,
    pub cost: Vec<CostRow>,
}

impl AnalyticsReport {
    pub fn compute(logs: &[SessionLog], prices: &PriceTable) -> Self {
        let counts = fix_counts(logs);
        AnalyticsReport {
            sessions: logs.len(),
            skipped_lines: 0,
            baseline_outcomes: OutcomeTable::from_outcomes(logs.iter().map(|l| &l.baseline_state)),
            terminal_outcomes: OutcomeTable::from_outcomes(
                logs.iter().filter_map(|l| l.terminal()).map(|t| &t.terminal),
            ),
            transitions: TransitionMatrix::from_logs(logs).rows(),
            error_types: error_type_counts(logs),
            similarity: similarity_curves(logs),
            fix_histogram: fix_histogram(&counts),
            correlations: fix_correlations(&counts),
            fix_counts: counts,
            cost: cost_report(logs, prices),
        }
    }

    /// Writes one CSV per table plus `report.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        write_csv(&dir.join("baseline_outcomes.csv"), &self.baseline_outcomes.rows)?;
        write_csv(&dir.join("terminal_outcomes.csv"), &self.terminal_outcomes.rows)?;
        write_csv(&dir.join("transitions.csv"), &self.transitions)?;
        write_csv(&dir.join("error_types.csv"), &self.error_types)?;
        write_csv(&dir.join("similarity_curve.csv"), &self.similarity.points)?;
        write_csv(&dir.join("similarity_per_fix.csv"), &self.similarity.rows)?;
        write_csv(&dir.join("fix_counts.csv"), &self.fix_counts)?;
        write_csv(&dir.join("fix_histogram.csv"), &self.fix_histogram)?;
        write_csv(&dir.join("correlations.csv"), &self.correlations)?;
        write_csv(&dir.join("cost.csv"), &self.cost)?;
        write_json(&dir.join("report.json"), self)
    }
}

/// Writes rows as CSV with a header row; an empty slice gives an empty file.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(!rows.is_empty()).from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)
}
