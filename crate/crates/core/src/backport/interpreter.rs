use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::BackportError;

const BUNDLED_TABLE: &str = include_str!("../../data/python_releases.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PyVersion {
    pub major: u32,
    pub minor: u32,
    pub patch: u32,
}

impl PyVersion {
    pub fn new(major: u32, minor: u32, patch: u32) -> Self {
        PyVersion { major, minor, patch }
    }

    pub fn family(self) -> (u32, u32) {
        (self.major, self.minor)
    }
}

impl fmt::Display for PyVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.major, self.minor, self.patch)
    }
}

impl FromStr for PyVersion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<u32> = s
            .trim()
            .split('.')
            .map(|p| p.parse::<u32>().map_err(|_| format!("bad version `{s}`")))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [major, minor] => Ok(PyVersion::new(major, minor, 0)),
            [major, minor, patch] => Ok(PyVersion::new(major, minor, patch)),
            _ => Err(format!("bad version `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterpreterRelease {
    pub version: PyVersion,
    pub released_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterpreterChoice {
    /// Family-latest patch that will be installed.
    pub version: PyVersion,
    /// The release that predates the submission (or the fallback release).
    pub base: PyVersion,
    /// Set when the submission predates every release of the major line.
    pub fallback: bool,
}

fn parse_table(text: &str, origin: &Path) -> Result<Vec<InterpreterRelease>, BackportError> {
    let bad = |message: String| BackportError::BadIndexFile {
        path: origin.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let version: PyVersion = rec.get(0).unwrap_or("").parse().map_err(bad)?;
        let date = rec.get(1).unwrap_or("");
        let released_at = NaiveDate::parse_from_str(date.trim(), "%Y-%m-%d")
            .map_err(|e| bad(format!("{date}: {e}")))?
            .and_hms_opt(0, 0, 0)
            .expect("midnight exists")
            .and_utc();
        out.push(InterpreterRelease { version, released_at });
    }
    out.sort_by_key(|r| (r.released_at, r.version));
    Ok(out)
}

/// Interpreter release dates shipped with the crate (CSV `version,released_at`).
pub fn bundled_interpreter_table() -> Vec<InterpreterRelease> {
    parse_table(BUNDLED_TABLE, Path::new("python_releases.csv")).expect("bundled table is valid")
}

pub fn load_interpreter_table(path: &Path) -> Result<Vec<InterpreterRelease>, BackportError> {
    parse_table(&std::fs::read_to_string(path)?, path)
}

/// Most recent release of `major` strictly before `submitted_at`, lifted to
/// the newest patch of its minor family present in the table. When the
/// submission predates the whole line the oldest release is used, flagged.
pub fn infer_interpreter(
    submitted_at: DateTime<Utc>,
    major: u32,
    table: &[InterpreterRelease],
) -> Result<InterpreterChoice, BackportError> {
    let line: Vec<&InterpreterRelease> = table.iter().filter(|r| r.version.major == major).collect();
    let before = line
        .iter()
        .filter(|r| r.released_at < submitted_at)
        .max_by_key(|r| (r.released_at, r.version));
    let (base, fallback) = match before {
        Some(r) => (r.version, false),
        None => {
            let oldest = line
                .iter()
                .min_by_key(|r| (r.released_at, r.version))
                .ok_or(BackportError::NoReleasesForMajor(major))?;
            log::warn!("submission {submitted_at} predates every Python {major} release");
            (oldest.version, true)
        }
    };
    let version = line
        .iter()
        .map(|r| r.version)
        .filter(|v| v.family() == base.family())
        .max()
        .expect("base is in its own family");
    Ok(InterpreterChoice {
        version,
        base,
        fallback,
    })
}
