use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::Deserialize;

use nbrevive_core::grader::{CompetitionSpec, GroundTruth, MetricRegistry};
use nbrevive_core::notebook::{parse_notebook, Notebook};

use crate::CliError;

/// Contents of `<stem>.meta.json` next to a notebook.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NotebookMeta {
    pub competition: Option<String>,
    /// Overrides the competition's target score.
    pub target_score: Option<f64>,
    pub submitted_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone)]
pub struct Entry {
    pub id: String,
    pub path: PathBuf,
}

impl Entry {
    pub fn meta_path(&self) -> PathBuf {
        self.path.with_file_name(format!("{}.meta.json", self.id))
    }

    pub fn notebook(&self) -> Result<Notebook, String> {
        let bytes = std::fs::read(&self.path).map_err(|e| format!("cannot read notebook: {e}"))?;
        parse_notebook(&bytes).map_err(|e| format!("unreadable notebook: {e}"))
    }

    pub fn meta(&self) -> Result<NotebookMeta, String> {
        let path = self.meta_path();
        let text = std::fs::read_to_string(&path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("bad metadata {}: {e}", path.display()))
    }
}

/// `*.ipynb` files directly under `dir`, sorted by id.
pub fn list_notebooks(dir: &Path) -> Result<Vec<Entry>, CliError> {
    let mut entries: Vec<Entry> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Config(format!("cannot list {}: {e}", dir.display())))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "ipynb"))
        .filter_map(|path| {
            let id = path.file_stem()?.to_str()?.to_string();
            Some(Entry { id, path })
        })
        .collect();
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(entries)
}

pub struct Competition {
    pub spec: CompetitionSpec,
    pub truth: Arc<GroundTruth>,
}

/// Competition specs keyed by id, with ground truth loaded up front.
pub struct Competitions {
    map: BTreeMap<String, Competition>,
}

impl Competitions {
    pub fn load_dir(dir: &Path, registry: &MetricRegistry) -> Result<Self, CliError> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| CliError::Config(format!("cannot list {}: {e}", dir.display())))?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "toml" || e == "json"))
            .collect();
        paths.sort();
        let mut map = BTreeMap::new();
        for path in paths {
            let spec = CompetitionSpec::load(&path, registry).map_err(|e| CliError::Config(e.to_string()))?;
            let truth = GroundTruth::load(&spec.ground_truth, &spec.schema)
                .map_err(|e| CliError::Config(format!("{}: {e}", spec.id)))?;
            if map.contains_key(&spec.id) {
                return Err(CliError::Config(format!("duplicate competition id `{}`", spec.id)));
            }
            map.insert(
                spec.id.clone(),
                Competition {
                    spec,
                    truth: Arc::new(truth),
                },
            );
        }
        Ok(Competitions { map })
    }

    /// The notebook's competition with its target score applied.
    pub fn resolve(&self, meta: &NotebookMeta) -> Result<(CompetitionSpec, Arc<GroundTruth>), String> {
        let id = meta.competition.as_deref().ok_or("metadata names no competition")?;
        let comp = self.map.get(id).ok_or_else(|| format!("unknown competition `{id}`"))?;
        let spec = match meta.target_score {
            Some(t) => comp.spec.with_target(t).map_err(|e| e.to_string())?,
            None if comp.spec.has_target() => comp.spec.clone(),
            None => return Err(format!("no target score for competition `{id}`")),
        };
        Ok((spec, comp.truth.clone()))
    }
}
