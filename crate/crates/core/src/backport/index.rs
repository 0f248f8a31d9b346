use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use pep440_rs::{Version, VersionSpecifiers};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::BackportError;
use crate::notebook::normalize_package_name;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Release {
    pub version: String,
    #[serde(rename = "upload_time")]
    pub released_at: DateTime<Utc>,
    #[serde(default)]
    pub requires_python: Option<String>,
    #[serde(default)]
    pub yanked: bool,
}

impl Release {
    pub fn new(version: &str, released_at: DateTime<Utc>) -> Self {
        Release {
            version: version.to_string(),
            released_at,
            requires_python: None,
            yanked: false,
        }
    }

    /// Whether `requires_python` admits `interpreter`. Missing or
    /// unparseable constraints admit everything.
    pub fn supports(&self, interpreter: &str) -> bool {
        let Some(spec) = self.requires_python.as_deref().filter(|s| !s.trim().is_empty()) else {
            return true;
        };
        let (Ok(specs), Ok(v)) = (VersionSpecifiers::from_str(spec), Version::from_str(interpreter))
        else {
            log::warn!("cannot evaluate requires_python `{spec}` against {interpreter}");
            return true;
        };
        specs.contains(&v)
    }
}

fn parse_time(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|t| t.and_utc())
}

/// Per-package release histories, each sorted ascending by release time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReleaseIndex {
    packages: BTreeMap<String, Vec<Release>>,
}

impl ReleaseIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, package: &str, mut releases: Vec<Release>) {
        releases.sort_by(|a, b| {
            a.released_at.cmp(&b.released_at).then_with(|| {
                match (Version::from_str(&a.version), Version::from_str(&b.version)) {
                    (Ok(x), Ok(y)) => x.cmp(&y),
                    _ => a.version.cmp(&b.version),
                }
            })
        });
        self.packages.insert(normalize_package_name(package), releases);
    }

    pub fn get(&self, package: &str) -> Option<&[Release]> {
        self.packages.get(&normalize_package_name(package)).map(Vec::as_slice)
    }

    pub fn packages(&self) -> impl Iterator<Item = &str> {
        self.packages.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.packages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packages.is_empty()
    }

    /// Parses one package document. Accepts the cache shape
    /// (`{"name", "releases": [{version, upload_time, requires_python, yanked}]}`
    /// or a bare release list) and the package index JSON API shape
    /// (`{"info": {...}, "releases": {"1.0": [file, ...]}}`).
    pub fn parse_package(text: &str) -> Result<(Option<String>, Vec<Release>), String> {
        let doc: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let name = doc
            .get("name")
            .or_else(|| doc.pointer("/info/name"))
            .and_then(Value::as_str)
            .map(str::to_string);
        let releases = match doc.get("releases").unwrap_or(&doc) {
            Value::Array(items) => items
                .iter()
                .map(|item| {
                    let version = item.get("version").and_then(Value::as_str).ok_or("release without version")?;
                    let time = item
                        .get("upload_time")
                        .and_then(Value::as_str)
                        .and_then(parse_time)
                        .ok_or_else(|| format!("release {version}: bad or missing upload_time"))?;
                    Ok(Release {
                        version: version.to_string(),
                        released_at: time,
                        requires_python: item.get("requires_python").and_then(Value::as_str).map(str::to_string),
                        yanked: item.get("yanked").and_then(Value::as_bool).unwrap_or(false),
                    })
                })
                .collect::<Result<Vec<_>, String>>()?,
            Value::Object(by_version) => by_version
                .iter()
                .filter_map(|(version, files)| from_index_files(version, files))
                .collect(),
            _ => return Err("`releases` must be a list or an object".into()),
        };
        Ok((name, releases))
    }

    /// Reads every `*.json` file in `dir`; the package name comes from the
    /// document or, failing that, the file stem.
    pub fn load_dir(dir: &Path) -> Result<Self, BackportError> {
        let mut index = ReleaseIndex::new();
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let text = std::fs::read_to_string(&path)?;
            let (name, releases) = Self::parse_package(&text).map_err(|message| {
                BackportError::BadIndexFile {
                    path: path.clone(),
                    message,
                }
            })?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            index.insert(name.as_deref().unwrap_or(stem), releases);
        }
        Ok(index)
    }

    /// Cache-shape JSON for one package.
    pub fn package_json(name: &str, releases: &[Release]) -> String {
        let doc = serde_json::json!({ "name": name, "releases": releases });
        serde_json::to_string_pretty(&doc).expect("serializable") + "\n"
    }
}

/// One version entry of the index API: earliest file upload is the release
/// time; a version is yanked only when all its files are.
fn from_index_files(version: &str, files: &Value) -> Option<Release> {
    let files = files.as_array()?;
    let time = files
        .iter()
        .filter_map(|f| {
            f.get("upload_time_iso_8601")
                .or_else(|| f.get("upload_time"))
                .and_then(Value::as_str)
                .and_then(parse_time)
        })
        .min()?;
    Some(Release {
        version: version.to_string(),
        released_at: time,
        requires_python: files
            .iter()
            .find_map(|f| f.get("requires_python").and_then(Value::as_str))
            .map(str::to_string),
        yanked: files
            .iter()
            .all(|f| f.get("yanked").and_then(Value::as_bool).unwrap_or(false)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    BeforeSubmission,
    InterpreterCompatible,
    OldestAvailable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub version: String,
    pub released_at: DateTime<Utc>,
    pub rule: SelectionRule,
}

/// Historical version for `pkg` among non-yanked releases: the newest one
/// released before the submission; else the oldest compatible with the
/// interpreter; else the oldest available.
pub fn select_version(
    pkg: &str,
    submitted_at: DateTime<Utc>,
    interpreter: &str,
    index: &ReleaseIndex,
) -> Result<Selection, BackportError> {
    let releases = index
        .get(pkg)
        .ok_or_else(|| BackportError::PackageUnknown(pkg.to_string()))?;
    let live: Vec<&Release> = releases.iter().filter(|r| !r.yanked).collect();
    let pick = |r: &Release, rule| Selection {
        version: r.version.clone(),
        released_at: r.released_at,
        rule,
    };
    if let Some(r) = live.iter().rev().find(|r| r.released_at < submitted_at) {
        return Ok(pick(r, SelectionRule::BeforeSubmission));
    }
    if let Some(r) = live.iter().find(|r| r.supports(interpreter)) {
        return Ok(pick(r, SelectionRule::InterpreterCompatible));
    }
    live.first()
        .map(|r| pick(r, SelectionRule::OldestAvailable))
        .ok_or_else(|| BackportError::NoCandidate(pkg.to_string()))
}
