//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use nbrevive_core::agent::{run_session, SessionConfig, SessionContext, SessionLog};
use nbrevive_core::backport::{EnvironmentSpec, InterpreterRelease, Release, ReleaseIndex};
use nbrevive_core::exec::{CannedCellError, CannedReport, CannedSubmission, ExecStatus, MockExecutor, MockFixture};
use nbrevive_core::grader::{CompetitionSpec, GroundTruth, MetricId, MetricRegistry, SubmissionSchema};
use nbrevive_core::llm::{MockBackend, MockScript, ScriptedReply};
use nbrevive_core::notebook::{parse_notebook, Cell, Notebook, Tokenizer};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// The round-trip corpus as `(file name, bytes)`, sorted by name.
pub fn corpus() -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(fixtures_dir().join("corpus"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "ipynb"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

pub fn load_fixture_notebook(name: &str) -> Notebook {
    parse_notebook(&std::fs::read(fixtures_dir().join("corpus").join(name)).unwrap()).unwrap()
}

/// One token per maximal run of non-whitespace characters. Counts are exact
/// and easy to predict, so token-gate boundaries can be hit precisely.
#[derive(Debug, Clone, Copy)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

// ---- competition fixture -------------------------------------------------

pub const TARGET: f64 = 0.9;

pub fn schema() -> SubmissionSchema {
    SubmissionSchema {
        id_column: "Id".into(),
        columns: vec!["Id".into(), "Cover_Type".into()],
    }
}

pub fn competition() -> CompetitionSpec {
    CompetitionSpec::new(
        "tabular-playground-series-dec-2021",
        MetricId::Accuracy,
        schema(),
        "truth.csv",
        TARGET,
    )
}

fn label(i: usize) -> usize {
    i % 7 + 1
}

pub fn truth() -> GroundTruth {
    let mut csv = String::from("Id,Cover_Type\n");
    for i in 0..10 {
        csv.push_str(&format!("{i},{}\n", label(i)));
    }
    GroundTruth::from_csv(&csv, &schema()).unwrap()
}

/// A submission with exactly `correct` of the ten labels right.
pub fn submission(correct: usize) -> CannedSubmission {
    let mut csv = String::from("Id,Cover_Type\n");
    for i in 0..10 {
        let y = if i < correct { label(i) } else { label(i) % 7 + 1 };
        csv.push_str(&format!("{i},{y}\n"));
    }
    CannedSubmission {
        path: "submission.csv".into(),
        content: csv,
    }
}

pub fn completed(correct: usize) -> CannedReport {
    CannedReport {
        status: ExecStatus::Completed,
        runtime: 12.5,
        errors: vec![],
        submission: Some(submission(correct)),
        env: "python 3.11.9".into(),
    }
}

pub fn failing(cell: usize, traceback: &str) -> CannedReport {
    CannedReport {
        status: ExecStatus::Completed,
        runtime: 3.0,
        errors: vec![CannedCellError {
            index: cell,
            traceback: traceback.into(),
        }],
        submission: None,
        env: "python 3.11.9".into(),
    }
}

pub const NAME_ERROR: &str = "Traceback (most recent call last):\n  File \"<cell>\", line 1, in <module>\nNameError: name 'np' is not defined";

pub fn name_error_notebook() -> Notebook {
    Notebook::from_cells([
        Cell::markdown("# Cover type baseline"),
        Cell::code("import pandas as pd\ntrain = pd.read_csv('/kaggle/input/tabular-playground-series-dec-2021/train.csv')"),
        Cell::code("pred = np.zeros(len(train), dtype=int) + 2"),
        Cell::code("pd.DataFrame({'Id': train.Id, 'Cover_Type': pred}).to_csv('submission.csv', index=False)"),
    ])
}

pub fn name_error_fixed() -> Notebook {
    let mut nb = name_error_notebook();
    nb.cells[2].source = "import numpy as np\npred = np.zeros(len(train), dtype=int) + 2".into();
    nb
}

/// Plan text followed by the fenced cell-delimited notebook.
pub fn patch_reply(plan: &str, nb: &Notebook) -> String {
    format!(
        "{plan}\n\n```\n{}```\n",
        nbrevive_core::notebook::render_cell_delimited(nb, false)
    )
}

pub struct Harness {
    pub comp: CompetitionSpec,
    pub truth: GroundTruth,
    pub registry: MetricRegistry,
    pub env: EnvironmentSpec,
    pub executor: MockExecutor,
    pub llm: MockBackend,
}

impl Harness {
    pub fn new(fixture: MockFixture, script: MockScript) -> Self {
        Harness {
            comp: competition(),
            truth: truth(),
            registry: MetricRegistry::default(),
            env: EnvironmentSpec::default(),
            executor: MockExecutor::new(fixture),
            llm: MockBackend::new(script),
        }
    }

    pub fn run(&self, id: &str, nb: &Notebook, cfg: &SessionConfig) -> SessionLog {
        let ctx = SessionContext {
            notebook_id: id.into(),
            notebook: nb,
            comp: &self.comp,
            truth: &self.truth,
            registry: &self.registry,
            env: &self.env,
            executor: &self.executor,
            llm: &self.llm,
            baseline: None,
        };
        run_session(&ctx, cfg)
    }
}

pub fn fixture_with(entries: &[(&Notebook, CannedReport)], default: Option<CannedReport>) -> MockFixture {
    let mut fx = MockFixture {
        default,
        ..MockFixture::default()
    };
    for (nb, report) in entries {
        fx.reports.insert(nb.content_hash(), report.clone());
    }
    fx
}

pub fn default_script(reply: &str) -> MockScript {
    MockScript {
        default: Some(ScriptedReply::text(reply)),
        ..MockScript::default()
    }
}

pub fn exact_config() -> SessionConfig {
    SessionConfig {
        tokenizer: Arc::new(WhitespaceTokenizer),
        ..SessionConfig::default()
    }
}

// ---- oracles ---------------------------------------------------------------

/// Textbook O(mn) Levenshtein over Unicode scalar values.
pub fn levenshtein_oracle(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

pub fn similarity_oracle(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein_oracle(a, b) as f64 / longest as f64
}

/// Tau-b by enumerating all pairs.
pub fn kendall_oracle(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = (x[i] - x[j]).signum() as i64 * i64::from(x[i] != x[j]);
            let dy = (y[i] - y[j]).signum() as i64 * i64::from(y[i] != y[j]);
            match (dx, dy) {
                (0, 0) => {}
                (0, _) => tx += 1,
                (_, 0) => ty += 1,
                _ if dx == dy => c += 1,
                _ => d += 1,
            }
        }
    }
    let denom = (((c + d + tx) * (c + d + ty)) as f64).sqrt();
    (denom > 0.0).then(|| (c - d) as f64 / denom)
}

pub fn cliff_oracle(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0i64;
    for x in a {
        for y in b {
            s += i64::from(x > y) - i64::from(x < y);
        }
    }
    s as f64 / (a.len() * b.len()) as f64
}

/// Brute-force historical version choice: enumerate every live release and
/// apply the three rules in order with explicit comparisons.
pub fn select_oracle(
    releases: &[Release],
    submitted_at: DateTime<Utc>,
    supports: impl Fn(&Release) -> bool,
) -> Option<String> {
    let live: Vec<&Release> = releases.iter().filter(|r| !r.yanked).collect();
    let mut best: Option<&Release> = None;
    for r in &live {
        if r.released_at < submitted_at && best.is_none_or(|b| r.released_at >= b.released_at) {
            best = Some(r);
        }
    }
    if let Some(b) = best {
        return Some(b.version.clone());
    }
    let mut oldest_ok: Option<&Release> = None;
    for r in &live {
        if supports(r) && oldest_ok.is_none_or(|b| r.released_at < b.released_at) {
            oldest_ok = Some(r);
        }
    }
    if let Some(b) = oldest_ok {
        return Some(b.version.clone());
    }
    let mut oldest: Option<&Release> = None;
    for r in &live {
        if oldest.is_none_or(|b| r.released_at < b.released_at) {
            oldest = Some(r);
        }
    }
    oldest.map(|r| r.version.clone())
}

pub fn single_package_index(releases: Vec<Release>) -> ReleaseIndex {
    let mut idx = ReleaseIndex::new();
    idx.insert("pkg", releases);
    idx
}

/// Every interpreter release of `major` strictly before `t`, by date.
pub fn interpreter_predecessors(table: &[InterpreterRelease], major: u32, t: DateTime<Utc>) -> Vec<InterpreterRelease> {
    table
        .iter()
        .filter(|r| r.version.major == major && r.released_at < t)
        .copied()
        .collect()
}
