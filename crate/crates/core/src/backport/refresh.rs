use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use super::{BackportError, ReleaseIndex};
use crate::notebook::normalize_package_name;

pub const DEFAULT_INDEX_URL: &str = "https://pypi.org/pypi";

/// Refreshes the on-disk index cache from a package index JSON API
/// (`{base}/{package}/json`). Writes are serialized and atomic.
pub struct IndexClient {
    base_url: String,
    cache_dir: PathBuf,
    http: reqwest::blocking::Client,
    write_lock: Mutex<()>,
}

impl IndexClient {
    pub fn new(base_url: impl Into<String>, cache_dir: impl Into<PathBuf>) -> Result<Self, BackportError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| BackportError::Refresh(e.to_string()))?;
        Ok(IndexClient {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            cache_dir: cache_dir.into(),
            http,
            write_lock: Mutex::new(()),
        })
    }

    pub fn cache_path(&self, package: &str) -> PathBuf {
        self.cache_dir.join(format!("{}.json", normalize_package_name(package)))
    }

    /// Downloads one package's history and stores it in cache shape.
    pub fn refresh(&self, package: &str) -> Result<PathBuf, BackportError> {
        let name = normalize_package_name(package);
        let url = format!("{}/{name}/json", self.base_url);
        let resp = self
            .http
            .get(&url)
            .send()
            .map_err(|e| BackportError::Refresh(format!("{url}: {e}")))?;
        if !resp.status().is_success() {
            return Err(BackportError::Refresh(format!("{url}: HTTP {}", resp.status())));
        }
        let body = resp.text().map_err(|e| BackportError::Refresh(e.to_string()))?;
        let (_, releases) =
            ReleaseIndex::parse_package(&body).map_err(|e| BackportError::Refresh(format!("{url}: {e}")))?;
        let path = self.cache_path(&name);
        self.write_atomic(&path, &ReleaseIndex::package_json(&name, &releases))?;
        Ok(path)
    }

    fn write_atomic(&self, path: &Path, contents: &str) -> Result<(), BackportError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        std::fs::create_dir_all(&self.cache_dir)?;
        let tmp = path.with_extension(format!("json.tmp{}", std::process::id()));
        std::fs::write(&tmp, contents)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}
