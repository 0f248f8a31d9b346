//! Historical environment reconstruction: interpreter inference, per-package
//! version selection and requirements emission.

mod imports;
mod index;
mod interpreter;
mod refresh;

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::notebook::{normalize_package_name, Constraint, Notebook, RequirementSpec};

pub use imports::{detect_major, extract_dependencies, AliasTable, STDLIB_MODULES};
pub use index::{select_version, Release, ReleaseIndex, Selection, SelectionRule};
pub use interpreter::{
    bundled_interpreter_table, infer_interpreter, load_interpreter_table, InterpreterChoice,
    InterpreterRelease, PyVersion,
};
pub use refresh::{IndexClient, DEFAULT_INDEX_URL};

#[derive(Debug, Error)]
pub enum BackportError {
    #[error("package `{0}` is not in the release index")]
    PackageUnknown(String),
    #[error("package `{0}` has no installable (non-yanked) release")]
    NoCandidate(String),
    #[error("no interpreter releases for major version {0}")]
    NoReleasesForMajor(u32),
    #[error("malformed release data in {path}: {message}")]
    BadIndexFile { path: PathBuf, message: String },
    #[error("malformed requirements line `{0}`")]
    BadRequirement(String),
    #[error("index refresh failed: {0}")]
    Refresh(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Interpreter pin plus requirements. `interpreter: None` means the
/// executor's own (contemporary) interpreter and packages.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub interpreter: Option<String>,
    pub requirements: Vec<RequirementSpec>,
}

impl EnvironmentSpec {
    pub fn requirements_text(&self) -> String {
        let mut lines: Vec<String> = self.requirements.iter().map(|r| r.to_string()).collect();
        lines.sort();
        lines.iter().map(|l| format!("{l}\n")).collect()
    }

    /// One-line description used in prompts and logs.
    pub fn describe(&self) -> String {
        let interp = match &self.interpreter {
            Some(v) => format!("Python {v}"),
            None => "the executor's current Python".to_string(),
        };
        if self.requirements.is_empty() {
            format!("{interp} with its preinstalled packages")
        } else {
            let reqs: Vec<String> = self.requirements.iter().map(|r| r.to_string()).collect();
            format!("{interp}; {}", reqs.join(", "))
        }
    }
}

/// `name<=version` lines, sorted by name, LF-terminated.
pub fn emit_requirements(selections: &BTreeMap<String, String>) -> String {
    selections
        .iter()
        .map(|(name, version)| format!("{name}<={version}\n"))
        .collect()
}

/// Inverse of [`emit_requirements`]; blank lines and `#` comments are skipped.
pub fn parse_requirements(text: &str) -> Result<BTreeMap<String, String>, BackportError> {
    let mut out = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, version) = line
            .split_once("<=")
            .ok_or_else(|| BackportError::BadRequirement(line.to_string()))?;
        let (name, version) = (name.trim(), version.trim());
        if name.is_empty() || version.is_empty() {
            return Err(BackportError::BadRequirement(line.to_string()));
        }
        out.insert(name.to_string(), version.to_string());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackportPlan {
    pub major: u32,
    pub interpreter: InterpreterChoice,
    pub selections: BTreeMap<String, Selection>,
    /// Imported packages absent from the index.
    pub missing: Vec<String>,
    pub env: EnvironmentSpec,
}

impl BackportPlan {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn requirements(&self) -> String {
        let flat = self
            .selections
            .iter()
            .map(|(k, s)| (k.clone(), s.version.clone()))
            .collect();
        emit_requirements(&flat)
    }
}

/// Full backport of one notebook. Packages without index entries are
/// reported in [`BackportPlan::missing`] rather than failing the plan.
pub fn backport_notebook(
    nb: &Notebook,
    submitted_at: DateTime<Utc>,
    index: &ReleaseIndex,
    aliases: &AliasTable,
    table: &[InterpreterRelease],
) -> Result<BackportPlan, BackportError> {
    let major = detect_major(nb, submitted_at);
    let interpreter = infer_interpreter(submitted_at, major, table)?;
    let interp = interpreter.version.to_string();
    let mut selections = BTreeMap::new();
    let mut missing = Vec::new();
    for pkg in extract_dependencies(nb, aliases) {
        match select_version(&pkg, submitted_at, &interp, index) {
            Ok(sel) => {
                selections.insert(normalize_package_name(&pkg), sel);
            }
            Err(BackportError::PackageUnknown(p)) => missing.push(p),
            Err(e) => return Err(e),
        }
    }
    let requirements = selections
        .iter()
        .map(|(name, sel)| RequirementSpec::new(name, Constraint::AtMost(sel.version.clone())))
        .collect();
    Ok(BackportPlan {
        major,
        env: EnvironmentSpec {
            interpreter: Some(interp),
            requirements,
        },
        interpreter,
        selections,
        missing,
    })
}
