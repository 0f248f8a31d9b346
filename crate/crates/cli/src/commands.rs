use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use nbrevive_core::agent::{run_session, SessionConfig, SessionContext, SessionLog, SessionStats};
use nbrevive_core::analytics::{load_logs, write_csv, write_json, AnalyticsReport, OutcomeTable};
use nbrevive_core::backport::{
    backport_notebook, bundled_interpreter_table, load_interpreter_table, AliasTable, BackportPlan,
    EnvironmentSpec, InterpreterRelease, ReleaseIndex,
};
use nbrevive_core::exec::{ContainerExecutor, ExecError, Executor, MockExecutor};
use nbrevive_core::grader::{classify, grade, ErrorStatus, MetricRegistry, ReproOutcome};
use nbrevive_core::llm::{cost, Completion, CompletionParams, LlmBackend, LlmError, MockBackend, RemoteBackend};
use nbrevive_core::notebook::Notebook;

use crate::config::{ExecutorKind, GatewayKind, RunConfig};
use crate::corpus::{list_notebooks, Competitions, Entry, NotebookMeta};
use crate::CliError;

fn build_executor(cfg: &RunConfig) -> Result<Box<dyn Executor>, CliError> {
    Ok(match cfg.executor {
        ExecutorKind::Mock => match &cfg.mock_fixture {
            Some(p) => Box::new(MockExecutor::from_file(p).map_err(|e| CliError::Config(e.to_string()))?),
            None => Box::new(MockExecutor::default()),
        },
        ExecutorKind::Container => Box::new(ContainerExecutor::new(
            &cfg.container_runtime,
            &cfg.container_image,
            &cfg.scratch_dir,
        )),
    })
}

/// Stands in for a gateway that could not be set up, so every session
/// still runs and ends in `llm_failed`.
struct Unavailable(LlmError);

impl LlmBackend for Unavailable {
    fn complete(&self, _prompt: &str, _params: &CompletionParams) -> Result<Completion, LlmError> {
        Err(self.0.clone())
    }
}

fn build_llm(cfg: &RunConfig) -> Result<Box<dyn LlmBackend>, CliError> {
    Ok(match cfg.gateway {
        GatewayKind::Mock => match &cfg.llm_script {
            Some(p) => Box::new(MockBackend::from_file(p).map_err(|e| CliError::Config(e.to_string()))?),
            None => Box::new(MockBackend::default()),
        },
        GatewayKind::Remote => match RemoteBackend::from_env(cfg.remote.clone()) {
            Ok(b) => Box::new(b),
            Err(e) => {
                log::error!("LLM gateway unavailable: {e}");
                Box::new(Unavailable(e))
            }
        },
    })
}

struct Backporter {
    index: ReleaseIndex,
    aliases: AliasTable,
    table: Vec<InterpreterRelease>,
}

impl Backporter {
    fn load(cfg: &RunConfig) -> Result<Self, CliError> {
        let dir = cfg.require_dir("index", &cfg.index_dir)?;
        let config = |e: nbrevive_core::backport::BackportError| CliError::Config(e.to_string());
        Ok(Backporter {
            index: ReleaseIndex::load_dir(dir).map_err(config)?,
            aliases: match &cfg.aliases {
                Some(p) => AliasTable::load(p).map_err(config)?,
                None => AliasTable::default(),
            },
            table: match &cfg.interpreter_table {
                Some(p) => load_interpreter_table(p).map_err(config)?,
                None => bundled_interpreter_table(),
            },
        })
    }

    fn plan(&self, nb: &Notebook, meta: &NotebookMeta) -> Result<BackportPlan, String> {
        let at = meta.submitted_at.ok_or("metadata has no submitted_at")?;
        backport_notebook(nb, at, &self.index, &self.aliases, &self.table).map_err(|e| e.to_string())
    }

    /// Environment for a run, or the reason it cannot be built.
    fn env(&self, nb: &Notebook, meta: &NotebookMeta) -> Result<EnvironmentSpec, String> {
        let plan = self.plan(nb, meta)?;
        if plan.is_complete() {
            Ok(plan.env)
        } else {
            Err(format!("packages missing from the index: {}", plan.missing.join(", ")))
        }
    }
}

fn pool(cfg: &RunConfig) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Other(e.to_string()))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// A notebook with its metadata, competition and execution environment.
struct Prepared {
    notebook: Notebook,
    comp: nbrevive_core::grader::CompetitionSpec,
    truth: Arc<nbrevive_core::grader::GroundTruth>,
    env: Result<EnvironmentSpec, String>,
}

fn prepare(entry: &Entry, comps: &Competitions, backporter: Option<&Backporter>) -> Result<Prepared, String> {
    let notebook = entry.notebook()?;
    let meta = entry.meta()?;
    let (comp, truth) = comps.resolve(&meta)?;
    let env = match backporter {
        Some(b) => b.env(&notebook, &meta),
        None => Ok(EnvironmentSpec::default()),
    };
    Ok(Prepared {
        notebook,
        comp,
        truth,
        env,
    })
}

fn load_batch(cfg: &RunConfig) -> Result<(Vec<Entry>, Competitions, Option<Backporter>), CliError> {
    let registry = MetricRegistry::default();
    let comps = Competitions::load_dir(cfg.require_dir("competitions", &cfg.competitions)?, &registry)?;
    let entries = list_notebooks(cfg.require_dir("notebooks", &cfg.notebooks)?)?;
    let backporter = if cfg.backported { Some(Backporter::load(cfg)?) } else { None };
    Ok((entries, comps, backporter))
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineRow {
    pub notebook_id: String,
    pub competition: String,
    pub error_status: String,
    pub label: String,
    pub has_csv: bool,
    pub delta_s: Option<f64>,
    pub score: Option<f64>,
    pub runtime: Option<f64>,
    pub failure: String,
}

#[derive(Debug, Serialize)]
struct BaselineDetail {
    notebook_id: String,
    competition: String,
    outcome: Option<ReproOutcome>,
    score: Option<f64>,
    runtime: Option<f64>,
    errors: Vec<String>,
    failure: Option<String>,
}

impl BaselineDetail {
    fn row(&self) -> BaselineRow {
        BaselineRow {
            notebook_id: self.notebook_id.clone(),
            competition: self.competition.clone(),
            error_status: self.outcome.map_or("", |o| o.error_status.as_str()).to_string(),
            label: self.outcome.map(|o| o.label.to_string()).unwrap_or_default(),
            has_csv: self.outcome.is_some_and(|o| o.has_csv),
            delta_s: self.outcome.and_then(|o| o.delta_s),
            score: self.score,
            runtime: self.runtime,
            failure: self.failure.clone().unwrap_or_default(),
        }
    }
}

#[derive(Debug, Serialize)]
struct BatchSummary {
    notebooks: usize,
    /// Notebooks that could not be loaded or resolved.
    load_failures: usize,
    reproducible: usize,
}

fn baseline_one(
    entry: &Entry,
    comps: &Competitions,
    backporter: Option<&Backporter>,
    exec: &dyn Executor,
    registry: &MetricRegistry,
    cfg: &RunConfig,
) -> BaselineDetail {
    let mut d = BaselineDetail {
        notebook_id: entry.id.clone(),
        competition: String::new(),
        outcome: None,
        score: None,
        runtime: None,
        errors: vec![],
        failure: None,
    };
    let p = match prepare(entry, comps, backporter) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("{}: {e}", entry.id);
            d.failure = Some(e);
            return d;
        }
    };
    d.competition = p.comp.id.clone();
    let env = match p.env {
        Ok(env) => env,
        Err(e) => {
            d.outcome = Some(ReproOutcome::failed(ErrorStatus::BackportFailed));
            d.failure = Some(e);
            return d;
        }
    };
    match exec.execute(&p.notebook.without_outputs(), &p.comp, &cfg.limits, &env) {
        Ok(report) => {
            d.runtime = Some(report.runtime);
            d.errors = report.error_tracebacks().map(|(_, tb)| tb.to_string()).collect();
            match grade(&report, &p.comp, &p.truth, registry, cfg.tau) {
                Ok(g) => {
                    d.outcome = Some(g.outcome);
                    d.score = g.score;
                    if !g.violations.is_empty() {
                        let v: Vec<String> = g.violations.iter().map(ToString::to_string).collect();
                        d.failure = Some(v.join("; "));
                    }
                }
                Err(e) => {
                    d.outcome = Some(classify(&report, None, cfg.tau));
                    d.failure = Some(format!("grading failed: {e}"));
                }
            }
        }
        Err(e) => {
            let status = match e {
                ExecError::EnvironmentInstall(_) => ErrorStatus::BackportFailed,
                _ => ErrorStatus::NotSaved,
            };
            d.outcome = Some(ReproOutcome::failed(status));
            d.failure = Some(e.to_string());
        }
    }
    d
}

/// Executes and grades every notebook once.
pub fn baseline(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let (entries, comps, backporter) = load_batch(cfg)?;
    let exec = build_executor(cfg)?;
    let registry = MetricRegistry::default();
    let details: Vec<BaselineDetail> = pool(cfg)?.install(|| {
        entries
            .par_iter()
            .map(|e| baseline_one(e, &comps, backporter.as_ref(), exec.as_ref(), &registry, cfg))
            .collect()
    });

    let dir = out.join("baseline");
    let per = dir.join("outcomes");
    ensure_dir(&per)?;
    for d in &details {
        let path = per.join(format!("{}.json", d.notebook_id));
        write_json(&path, d).map_err(|e| CliError::io(&path, e))?;
    }
    let rows: Vec<BaselineRow> = details.iter().map(BaselineDetail::row).collect();
    let path = dir.join("outcomes.csv");
    write_csv(&path, &rows).map_err(|e| CliError::io(&path, e))?;
    let table = OutcomeTable::from_outcomes(details.iter().filter_map(|d| d.outcome.as_ref()));
    let path = dir.join("outcome_table.csv");
    write_csv(&path, &table.rows).map_err(|e| CliError::io(&path, e))?;
    let summary = BatchSummary {
        notebooks: details.len(),
        load_failures: details.iter().filter(|d| d.outcome.is_none()).count(),
        reproducible: table.reproducible() as usize,
    };
    let path = dir.join("summary.json");
    write_json(&path, &summary).map_err(|e| CliError::io(&path, e))?;
    println!(
        "baseline: {} notebooks, {} reproducible, {} not loaded",
        summary.notebooks, summary.reproducible, summary.load_failures
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct BackportRow {
    pub notebook_id: String,
    /// `ok` or `backport_failed`.
    pub status: String,
    pub interpreter: String,
    pub interpreter_fallback: bool,
    pub packages: usize,
    pub missing: String,
    pub failure: String,
}

/// Writes a requirements file and interpreter choice per notebook.
pub fn backport(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let entries = list_notebooks(cfg.require_dir("notebooks", &cfg.notebooks)?)?;
    let b = Backporter::load(cfg)?;
    let results: Vec<(String, Result<BackportPlan, String>)> = pool(cfg)?.install(|| {
        entries
            .par_iter()
            .map(|e| {
                let plan = e.notebook().and_then(|nb| b.plan(&nb, &e.meta()?));
                (e.id.clone(), plan)
            })
            .collect()
    });
    if results.is_empty() {
        println!("backport: no notebooks");
        return Ok(());
    }

    let dir = out.join("backport");
    ensure_dir(&dir)?;
    let mut rows = Vec::new();
    for (id, plan) in &results {
        let mut row = BackportRow {
            notebook_id: id.clone(),
            status: ErrorStatus::BackportFailed.as_str().to_string(),
            interpreter: String::new(),
            interpreter_fallback: false,
            packages: 0,
            missing: String::new(),
            failure: String::new(),
        };
        match plan {
            Ok(plan) => {
                let nb_dir = dir.join(id);
                ensure_dir(&nb_dir)?;
                let path = nb_dir.join("plan.json");
                write_json(&path, plan).map_err(|e| CliError::io(&path, e))?;
                row.interpreter = plan.interpreter.version.to_string();
                row.interpreter_fallback = plan.interpreter.fallback;
                row.packages = plan.selections.len();
                row.missing = plan.missing.join(";");
                if plan.is_complete() {
                    row.status = "ok".into();
                    write_text(&nb_dir.join("requirements.txt"), &plan.requirements())?;
                    write_text(&nb_dir.join("python-version.txt"), &format!("{}\n", plan.interpreter.version))?;
                } else {
                    row.failure = "packages missing from the index".into();
                }
            }
            Err(e) => {
                log::warn!("{id}: {e}");
                row.failure = e.clone();
            }
        }
        rows.push(row);
    }
    let path = dir.join("summary.csv");
    write_csv(&path, &rows).map_err(|e| CliError::io(&path, e))?;
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    println!("backport: {} notebooks, {failed} flagged backport_failed", rows.len());
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionRow {
    pub notebook_id: String,
    pub baseline_status: String,
    pub baseline_label: String,
    pub terminal_status: String,
    pub terminal_label: String,
    pub fixes: usize,
    pub final_score: Option<f64>,
    pub cost_usd: f64,
    pub failure: String,
}

fn session_config(cfg: &RunConfig) -> SessionConfig {
    SessionConfig {
        tau: cfg.tau,
        max_iterations: cfg.max_iterations,
        mode: cfg.mode,
        cutoff: cfg.cutoff,
        retry_budget: cfg.retry_budget,
        limits: cfg.limits.clone(),
        ..SessionConfig::default()
    }
}

struct Modernized {
    id: String,
    log: Option<SessionLog>,
    failure: Option<String>,
}

fn modernize_one(
    entry: &Entry,
    comps: &Competitions,
    backporter: Option<&Backporter>,
    exec: &dyn Executor,
    llm: &dyn LlmBackend,
    registry: &MetricRegistry,
    scfg: &SessionConfig,
) -> Modernized {
    let p = match prepare(entry, comps, backporter) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("{}: {e}", entry.id);
            return Modernized {
                id: entry.id.clone(),
                log: None,
                failure: Some(e),
            };
        }
    };
    let log = match &p.env {
        Ok(env) => run_session(
            &SessionContext {
                notebook_id: entry.id.clone(),
                notebook: &p.notebook,
                comp: &p.comp,
                truth: &p.truth,
                registry,
                env,
                executor: exec,
                llm,
                baseline: None,
            },
            scfg,
        ),
        Err(e) => {
            let failed = ReproOutcome::failed(ErrorStatus::BackportFailed);
            let mut log = SessionLog::new(entry.id.clone(), failed);
            log.finish(failed, None, vec![], SessionStats::of(&p.notebook, vec![]), Some(e.clone()));
            log
        }
    };
    log::info!(
        "{}: {} after {} fixes",
        entry.id,
        log.terminal_state().map_or("?".to_string(), |t| t.label.to_string()),
        log.records().len()
    );
    Modernized {
        id: entry.id.clone(),
        log: Some(log),
        failure: None,
    }
}

/// Runs a repair session per notebook and writes logs and patched notebooks.
pub fn modernize(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let (entries, comps, backporter) = load_batch(cfg)?;
    let exec = build_executor(cfg)?;
    let llm = build_llm(cfg)?;
    let registry = MetricRegistry::default();
    let scfg = session_config(cfg);
    let results: Vec<Modernized> = pool(cfg)?.install(|| {
        entries
            .par_iter()
            .map(|e| modernize_one(e, &comps, backporter.as_ref(), exec.as_ref(), llm.as_ref(), &registry, &scfg))
            .collect()
    });

    let dir = out.join("modernize");
    let logs_dir = dir.join("logs");
    let nb_dir = dir.join("notebooks");
    ensure_dir(&logs_dir)?;
    ensure_dir(&nb_dir)?;
    let mut rows = Vec::new();
    for m in &results {
        let mut row = SessionRow {
            notebook_id: m.id.clone(),
            baseline_status: String::new(),
            baseline_label: String::new(),
            terminal_status: String::new(),
            terminal_label: String::new(),
            fixes: 0,
            final_score: None,
            cost_usd: 0.0,
            failure: m.failure.clone().unwrap_or_default(),
        };
        if let Some(log) = &m.log {
            let path = logs_dir.join(format!("{}.jsonl", m.id));
            log.write_jsonl(&path).map_err(|e| CliError::io(&path, e))?;
            if let Some(nb) = &log.final_notebook {
                write_text(&nb_dir.join(format!("{}.ipynb", m.id)), &nb.to_ipynb())?;
            }
            row.baseline_status = log.baseline_state.error_status.as_str().into();
            row.baseline_label = log.baseline_state.label.to_string();
            row.fixes = log.records().len();
            row.cost_usd = cost(&log.total_usage(), &cfg.prices);
            if let Some(t) = log.terminal() {
                row.terminal_status = t.terminal.error_status.as_str().into();
                row.terminal_label = t.terminal.label.to_string();
                row.final_score = t.final_score;
                row.failure = t.failure.clone().unwrap_or_default();
            }
        }
        rows.push(row);
    }
    let path = dir.join("summary.csv");
    write_csv(&path, &rows).map_err(|e| CliError::io(&path, e))?;
    let summary = BatchSummary {
        notebooks: rows.len(),
        load_failures: results.iter().filter(|m| m.log.is_none()).count(),
        reproducible: results
            .iter()
            .filter(|m| m.log.as_ref().and_then(SessionLog::terminal_state).is_some_and(|t| t.is_reproducible()))
            .count(),
    };
    let path = dir.join("summary.json");
    write_json(&path, &summary).map_err(|e| CliError::io(&path, e))?;
    println!(
        "modernize: {} notebooks, {} reproducible, {} not loaded",
        summary.notebooks, summary.reproducible, summary.load_failures
    );
    Ok(())
}

/// Aggregates session logs into report tables.
pub fn report(cfg: &RunConfig, logs: &Path, out: &Path) -> Result<(), CliError> {
    if !logs.is_dir() {
        return Err(CliError::Other(format!("logs directory {} does not exist", logs.display())));
    }
    let loaded = load_logs(logs).map_err(|e| CliError::io(logs, e))?;
    if loaded.skipped_lines > 0 {
        log::warn!("skipped {} corrupt log lines", loaded.skipped_lines);
        eprintln!("warning: skipped {} corrupt log lines", loaded.skipped_lines);
    }
    for p in &loaded.incomplete {
        log::warn!("{} has no terminal record", p.display());
    }
    let mut report = AnalyticsReport::compute(&loaded.logs, &cfg.prices);
    report.skipped_lines = loaded.skipped_lines;
    let dir: PathBuf = out.join("report");
    report.write_dir(&dir).map_err(|e| CliError::io(&dir, e))?;
    println!("report: {} sessions, {} skipped lines", report.sessions, loaded.skipped_lines);
    Ok(())
}
