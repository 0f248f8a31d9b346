//! Notebook model and the text formats derived from it.

mod delimited;
mod ipynb;
mod pip;
mod similarity;
mod tokens;

use serde_json::{Map, Value};
use thiserror::Error;

pub use delimited::{parse_cell_delimited, render_cell_delimited, render_cells, TRACEBACK_MARKER};
pub use ipynb::parse_notebook;
pub use pip::{extract_pip_installs, normalize_package_name, Constraint, RequirementSpec};
pub use similarity::{code_text, edit_similarity, levenshtein, notebook_similarity};
pub use tokens::{count_tokens, ByteApproxTokenizer, RegexTokenizer, Tokenizer};

#[derive(Debug, Error)]
pub enum NotebookError {
    #[error("malformed notebook: {0}")]
    MalformedNotebook(String),
    #[error("unsupported nbformat major version {0} (expected 4)")]
    UnsupportedFormat(u64),
    #[error("patch parse error: {0}")]
    PatchParseError(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Code,
    Markdown,
}

impl CellKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Code => "code",
            CellKind::Markdown => "markdown",
        }
    }
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputKind {
    Stream,
    Display,
    Error,
}

/// One output attached to a code cell.
///
/// `traceback` is `Some` exactly when `kind == Error`, and is never empty in
/// that case.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutput {
    pub kind: OutputKind,
    pub text: String,
    pub traceback: Option<String>,
    pub exception_class: Option<String>,
    /// Original JSON, re-emitted verbatim when serializing.
    pub(crate) raw: Option<Value>,
}

impl CellOutput {
    pub fn stream(text: impl Into<String>) -> Self {
        CellOutput {
            kind: OutputKind::Stream,
            text: text.into(),
            traceback: None,
            exception_class: None,
            raw: None,
        }
    }

    pub fn display(text: impl Into<String>) -> Self {
        CellOutput {
            kind: OutputKind::Display,
            text: text.into(),
            traceback: None,
            exception_class: None,
            raw: None,
        }
    }

    /// Builds an error output. An empty traceback is replaced by the
    /// `Class: message` line so the output always carries one.
    pub fn error(traceback: impl Into<String>) -> Self {
        let traceback = traceback.into();
        let traceback = traceback.trim_end_matches('\n').to_string();
        let traceback = if traceback.trim().is_empty() {
            "UnknownError: (no traceback captured)".to_string()
        } else {
            traceback
        };
        let exception_class = exception_class_of(&traceback);
        let text = last_nonempty_line(&traceback).unwrap_or_default().to_string();
        CellOutput {
            kind: OutputKind::Error,
            text,
            traceback: Some(traceback),
            exception_class,
            raw: None,
        }
    }

    pub fn is_error(&self) -> bool {
        self.kind == OutputKind::Error
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub kind: CellKind,
    pub source: String,
    pub outputs: Vec<CellOutput>,
    /// Execution time in seconds, when the runner recorded one.
    pub exec_time: Option<f64>,
    pub(crate) raw: Option<Map<String, Value>>,
}

impl Cell {
    pub fn code(source: impl Into<String>) -> Self {
        Cell {
            index: 0,
            kind: CellKind::Code,
            source: source.into(),
            outputs: Vec::new(),
            exec_time: None,
            raw: None,
        }
    }

    pub fn markdown(source: impl Into<String>) -> Self {
        Cell {
            kind: CellKind::Markdown,
            ..Cell::code(source)
        }
    }

    pub fn has_error(&self) -> bool {
        self.outputs.iter().any(CellOutput::is_error)
    }

    /// All error tracebacks of this cell joined by newlines.
    pub fn traceback(&self) -> Option<String> {
        let tbs: Vec<&str> = self
            .outputs
            .iter()
            .filter_map(|o| o.traceback.as_deref())
            .collect();
        (!tbs.is_empty()).then(|| tbs.join("\n"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Notebook {
    pub format_version: (u32, u32),
    pub cells: Vec<Cell>,
    /// Notebook-level metadata, kept as parsed.
    pub metadata: Map<String, Value>,
    /// Unknown top-level keys, re-emitted on serialization.
    pub(crate) extra: Map<String, Value>,
}

impl Default for Notebook {
    fn default() -> Self {
        Notebook {
            format_version: (4, 5),
            cells: Vec::new(),
            metadata: Map::new(),
            extra: Map::new(),
        }
    }
}

impl Notebook {
    /// Builds a notebook from cells, assigning contiguous indices.
    pub fn from_cells(cells: impl IntoIterator<Item = Cell>) -> Self {
        let mut nb = Notebook {
            cells: cells.into_iter().collect(),
            ..Notebook::default()
        };
        nb.reindex();
        nb
    }

    pub fn reindex(&mut self) {
        for (i, cell) in self.cells.iter_mut().enumerate() {
            cell.index = i;
            if cell.kind == CellKind::Markdown {
                cell.outputs.clear();
            }
        }
    }

    pub fn code_cells(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.kind == CellKind::Code)
    }

    pub fn first_error_cell(&self) -> Option<usize> {
        self.cells.iter().position(Cell::has_error)
    }

    /// Content hash over the cell-delimited rendering (sources only), used
    /// to key scripted fixtures.
    pub fn content_hash(&self) -> String {
        crate::sha256_hex(render_cell_delimited(self, false))
    }

    /// A copy with all outputs and timings removed.
    pub fn without_outputs(&self) -> Notebook {
        let mut nb = self.clone();
        for cell in &mut nb.cells {
            cell.outputs.clear();
            cell.exec_time = None;
        }
        nb
    }

    /// Replaces the cells with those of `patch`, keeping notebook metadata.
    /// Cell-level metadata is carried over where the cell at the same
    /// position has the same kind.
    pub fn with_patched_cells(&self, patch: &Notebook) -> Notebook {
        let cells = patch
            .cells
            .iter()
            .enumerate()
            .map(|(i, new)| {
                let mut cell = Cell {
                    index: i,
                    kind: new.kind,
                    source: new.source.clone(),
                    outputs: Vec::new(),
                    exec_time: None,
                    raw: None,
                };
                if let Some(old) = self.cells.get(i) {
                    if old.kind == new.kind {
                        cell.raw = old.raw.clone();
                    }
                }
                cell
            })
            .collect();
        Notebook {
            format_version: self.format_version,
            cells,
            metadata: self.metadata.clone(),
            extra: self.extra.clone(),
        }
    }

    /// Serializes to nbformat v4 JSON (one-space indent, trailing newline).
    pub fn to_ipynb(&self) -> String {
        ipynb::serialize(self)
    }
}

fn last_nonempty_line(text: &str) -> Option<&str> {
    text.lines().rev().map(str::trim).find(|l| !l.is_empty())
}

/// Exception class named on the last line of a traceback (`Class: message`
/// or a bare `Class`). Dotted names are reduced to their final component.
pub fn exception_class_of(traceback: &str) -> Option<String> {
    let line = last_nonempty_line(traceback)?;
    let head = line.split(':').next().unwrap_or(line).trim();
    let valid = !head.is_empty()
        && head
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
        && !head.starts_with(|c: char| c.is_ascii_digit() || c == '.');
    if !valid {
        return None;
    }
    head.rsplit('.').next().map(str::to_string)
}

/// Removes ANSI colour escapes that kernels embed in tracebacks.
pub fn strip_ansi(text: &str) -> String {
    static RE: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    let re = RE.get_or_init(|| regex::Regex::new(r"\x1b\[[0-9;?]*[ -/]*[@-~]").unwrap());
    re.replace_all(text, "").into_owned()
}
