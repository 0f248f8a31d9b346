//! One modernization session and its JSON-lines log.
//!
//! A log file holds one `{"type": "iteration", ...}` line per fix attempt
//! followed by exactly one `{"type": "terminal", ...}` line.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{build_prompt, classify_issue, parse_response, FixType, Mode, PromptInput, Scores};
use crate::backport::EnvironmentSpec;
use crate::exec::{ExecError, ExecLimits, ExecutionReport, Executor};
use crate::grader::{
    classify, grade, CompetitionSpec, ErrorStatus, GroundTruth, MetricRegistry, ReproOutcome, DEFAULT_TAU,
};
use crate::llm::{CompletionParams, LlmBackend, Usage};
use crate::notebook::{notebook_similarity, ByteApproxTokenizer, Notebook, Tokenizer};

use super::prompt::DEFAULT_TOKEN_CUTOFF;

#[derive(Clone)]
pub struct SessionConfig {
    pub tau: f64,
    /// Iteration cap `N`; also bounds the number of LLM calls.
    pub max_iterations: usize,
    pub mode: Mode,
    pub cutoff: usize,
    /// Same-iteration retries after a malformed response.
    pub retry_budget: usize,
    pub limits: ExecLimits,
    pub params: CompletionParams,
    pub tokenizer: Arc<dyn Tokenizer>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            tau: DEFAULT_TAU,
            max_iterations: 16,
            mode: Mode::FileLevel,
            cutoff: DEFAULT_TOKEN_CUTOFF,
            retry_budget: 1,
            limits: ExecLimits::default(),
            params: CompletionParams::default(),
            tokenizer: Arc::new(ByteApproxTokenizer),
        }
    }
}

impl fmt::Debug for SessionConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SessionConfig")
            .field("tau", &self.tau)
            .field("max_iterations", &self.max_iterations)
            .field("mode", &self.mode)
            .field("cutoff", &self.cutoff)
            .field("retry_budget", &self.retry_budget)
            .field("limits", &self.limits)
            .finish_non_exhaustive()
    }
}

/// Inputs of one session. `comp` must carry the notebook's target score.
pub struct SessionContext<'a> {
    pub notebook_id: String,
    pub notebook: &'a Notebook,
    pub comp: &'a CompetitionSpec,
    pub truth: &'a GroundTruth,
    pub registry: &'a MetricRegistry,
    pub env: &'a EnvironmentSpec,
    pub executor: &'a dyn Executor,
    pub llm: &'a dyn LlmBackend,
    /// Baseline execution, when already available.
    pub baseline: Option<ExecutionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixRecord {
    pub iteration: usize,
    pub fix_type: FixType,
    pub prompt: String,
    pub prompt_tokens: usize,
    pub plan: String,
    pub response: String,
    pub patch_applied: bool,
    pub pre_state: ReproOutcome,
    pub post_state: ReproOutcome,
    pub tokens: Usage,
    pub llm_calls: usize,
    pub edit_sim_prev: f64,
    pub edit_sim_baseline: f64,
    #[serde(default)]
    pub score: Option<f64>,
    #[serde(default)]
    pub runtime: Option<f64>,
    /// Final traceback lines of the run after this fix.
    #[serde(default)]
    pub post_errors: Vec<String>,
    /// Externally supplied root-cause label; never filled in by the tool.
    #[serde(default)]
    pub root_cause: Option<String>,
    #[serde(default)]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub cells: usize,
    pub code_cells: usize,
    /// Non-blank code lines.
    pub loc: usize,
    pub baseline_errors: Vec<String>,
}

impl SessionStats {
    pub fn of(nb: &Notebook, baseline_errors: Vec<String>) -> Self {
        SessionStats {
            cells: nb.cells.len(),
            code_cells: nb.code_cells().count(),
            loc: nb
                .code_cells()
                .flat_map(|c| c.source.lines())
                .filter(|l| !l.trim().is_empty())
                .count(),
            baseline_errors,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalRecord {
    pub notebook_id: String,
    pub baseline_state: ReproOutcome,
    pub terminal: ReproOutcome,
    pub iterations: usize,
    pub total_usage: Usage,
    #[serde(default)]
    pub final_score: Option<f64>,
    #[serde(default)]
    pub final_errors: Vec<String>,
    #[serde(default)]
    pub stats: SessionStats,
    #[serde(default)]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogLine {
    Iteration(FixRecord),
    Terminal(TerminalRecord),
}

/// Append-only session trace; the terminal outcome is set exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub notebook_id: String,
    pub baseline_state: ReproOutcome,
    records: Vec<FixRecord>,
    terminal: Option<TerminalRecord>,
    /// Notebook the session ended with; not part of the persisted log.
    pub final_notebook: Option<Notebook>,
}

impl SessionLog {
    pub fn new(notebook_id: impl Into<String>, baseline_state: ReproOutcome) -> Self {
        SessionLog {
            notebook_id: notebook_id.into(),
            baseline_state,
            records: Vec::new(),
            terminal: None,
            final_notebook: None,
        }
    }

    pub fn push(&mut self, record: FixRecord) {
        assert!(self.terminal.is_none(), "session log already finished");
        self.records.push(record);
    }

    /// Sets the terminal record; `total_usage` and `iterations` are derived
    /// from the pushed records.
    pub fn finish(
        &mut self,
        terminal: ReproOutcome,
        final_score: Option<f64>,
        final_errors: Vec<String>,
        stats: SessionStats,
        failure: Option<String>,
    ) {
        assert!(self.terminal.is_none(), "terminal outcome already set");
        self.terminal = Some(TerminalRecord {
            notebook_id: self.notebook_id.clone(),
            baseline_state: self.baseline_state,
            terminal,
            iterations: self.records.len(),
            total_usage: self.records.iter().map(|r| r.tokens).sum(),
            final_score,
            final_errors,
            stats,
            failure,
        });
    }

    pub fn records(&self) -> &[FixRecord] {
        &self.records
    }

    pub fn terminal(&self) -> Option<&TerminalRecord> {
        self.terminal.as_ref()
    }

    pub fn terminal_state(&self) -> Option<ReproOutcome> {
        self.terminal.as_ref().map(|t| t.terminal)
    }

    pub fn total_usage(&self) -> Usage {
        self.records.iter().map(|r| r.tokens).sum()
    }

    pub fn lines(&self) -> Vec<LogLine> {
        let mut out: Vec<LogLine> = self.records.iter().cloned().map(LogLine::Iteration).collect();
        if let Some(t) = &self.terminal {
            out.push(LogLine::Terminal(t.clone()));
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        self.lines()
            .iter()
            .map(|l| serde_json::to_string(l).expect("serializable") + "\n")
            .collect()
    }

    pub fn write_jsonl(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        for line in self.lines() {
            serde_json::to_writer(&mut f, &line)?;
            f.write_all(b"\n")?;
        }
        f.flush()
    }

    /// Rebuilds a log from JSON lines. Unparseable lines are skipped and
    /// counted; `None` when no terminal record is present.
    pub fn from_jsonl(reader: impl BufRead) -> std::io::Result<(Option<SessionLog>, usize)> {
        let mut records = Vec::new();
        let mut terminal = None;
        let mut skipped = 0;
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<LogLine>(&line) {
                Ok(LogLine::Iteration(r)) => records.push(r),
                Ok(LogLine::Terminal(t)) => terminal = Some(t),
                Err(e) => {
                    log::warn!("skipping corrupt log line: {e}");
                    skipped += 1;
                }
            }
        }
        Ok((
            terminal.map(|t| SessionLog {
                notebook_id: t.notebook_id.clone(),
                baseline_state: t.baseline_state,
                records,
                terminal: Some(t),
                final_notebook: None,
            }),
            skipped,
        ))
    }

    pub fn read_jsonl(path: &Path) -> std::io::Result<(Option<SessionLog>, usize)> {
        Self::from_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

struct Evaluation {
    report: Option<ExecutionReport>,
    outcome: ReproOutcome,
    score: Option<f64>,
    failure: Option<String>,
}

impl Evaluation {
    fn errors(&self) -> Vec<String> {
        self.report
            .as_ref()
            .map(|r| {
                r.error_tracebacks()
                    .filter_map(|(_, tb)| tb.lines().rev().map(str::trim).find(|l| !l.is_empty()))
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default()
    }
}

fn grade_report(ctx: &SessionContext<'_>, cfg: &SessionConfig, report: ExecutionReport) -> Evaluation {
    match grade(&report, ctx.comp, ctx.truth, ctx.registry, cfg.tau) {
        Ok(g) => Evaluation {
            outcome: g.outcome,
            score: g.score,
            failure: None,
            report: Some(report),
        },
        Err(e) => Evaluation {
            outcome: classify(&report, None, cfg.tau),
            score: None,
            failure: Some(format!("grading failed: {e}")),
            report: Some(report),
        },
    }
}

fn evaluate(ctx: &SessionContext<'_>, cfg: &SessionConfig, nb: &Notebook) -> Evaluation {
    match ctx.executor.execute(nb, ctx.comp, &cfg.limits, ctx.env) {
        Ok(report) => grade_report(ctx, cfg, report),
        Err(e) => {
            let status = match e {
                ExecError::EnvironmentInstall(_) => ErrorStatus::BackportFailed,
                _ => ErrorStatus::NotSaved,
            };
            Evaluation {
                report: None,
                outcome: ReproOutcome::failed(status),
                score: None,
                failure: Some(e.to_string()),
            }
        }
    }
}

/// Runs the execute -> grade -> triage -> prompt -> patch loop until the
/// notebook reproduces, the iteration cap is hit, or the LLM step fails.
pub fn run_session(ctx: &SessionContext<'_>, cfg: &SessionConfig) -> SessionLog {
    let baseline_nb = ctx.notebook.without_outputs();
    let mut eval = match ctx.baseline.clone() {
        Some(report) => grade_report(ctx, cfg, report),
        None => evaluate(ctx, cfg, &baseline_nb),
    };
    let stats = SessionStats::of(&baseline_nb, eval.errors());
    let mut log = SessionLog::new(ctx.notebook_id.clone(), eval.outcome);
    let mut current = baseline_nb.clone();
    let mut calls = 0usize;
    let max = cfg.max_iterations;

    let failure = loop {
        if eval.outcome.is_reproducible() {
            break None;
        }
        let Some(report) = eval.report.as_ref() else {
            break eval.failure.clone();
        };
        if log.records().len() >= max || calls >= max {
            break None;
        }

        let fix = classify_issue(report, eval.outcome.delta_s, cfg.tau);
        let install_failures: Vec<String> = report.install_failures().map(str::to_string).collect();
        let shown = if report.executed_notebook.cells.len() == current.cells.len() {
            &report.executed_notebook
        } else {
            &current
        };
        let input = PromptInput {
            fix,
            notebook: shown,
            comp: ctx.comp,
            env: ctx.env,
            scores: Scores {
                target: ctx.comp.target_score,
                current: eval.score,
                directionality: ctx.comp.directionality,
            },
            mode: cfg.mode,
            time_limit: cfg.limits.wall_clock,
            install_failures: &install_failures,
            no_submission: report.submission.is_none(),
            partial: report.partial,
        };
        let prompt = match build_prompt(&input, cfg.tokenizer.as_ref(), cfg.cutoff) {
            Ok(p) => p,
            Err(e) => {
                eval = Evaluation {
                    outcome: ReproOutcome::failed(ErrorStatus::LlmFailed),
                    score: None,
                    failure: Some(e.to_string()),
                    report: None,
                };
                break eval.failure.clone();
            }
        };

        let pre_state = eval.outcome;
        let mut usage = Usage::default();
        let mut attempts = 0usize;
        let mut retries_left = cfg.retry_budget;
        let parsed = loop {
            attempts += 1;
            calls += 1;
            let reply = match ctx.llm.complete(&prompt.text, &cfg.params) {
                Ok(c) => c,
                Err(e) => break Err((String::new(), format!("LLM call failed: {e}"), true)),
            };
            usage += reply.usage;
            match parse_response(&reply.text) {
                Ok((plan, patch)) => break Ok((reply.text, plan, patch)),
                Err(e) if retries_left > 0 && calls < max => {
                    log::warn!("{}: malformed response ({e}); retrying", ctx.notebook_id);
                    retries_left -= 1;
                }
                Err(e) => break Err((reply.text, format!("malformed response: {e}"), false)),
            }
        };

        let iteration = log.records().len() + 1;
        let (response, plan, patch) = match parsed {
            Ok(ok) => ok,
            Err((response, why, gateway)) => {
                let failed = ReproOutcome::failed(ErrorStatus::LlmFailed);
                if !gateway || usage != Usage::default() {
                    log.push(FixRecord {
                        iteration,
                        fix_type: fix,
                        prompt: prompt.text,
                        prompt_tokens: prompt.tokens,
                        plan: String::new(),
                        response,
                        patch_applied: false,
                        pre_state,
                        post_state: failed,
                        tokens: usage,
                        llm_calls: attempts,
                        edit_sim_prev: 1.0,
                        edit_sim_baseline: notebook_similarity(&baseline_nb, &current),
                        score: None,
                        runtime: None,
                        post_errors: Vec::new(),
                        root_cause: None,
                        failure: Some(why.clone()),
                    });
                }
                eval = Evaluation {
                    outcome: failed,
                    score: None,
                    failure: Some(why.clone()),
                    report: None,
                };
                break Some(why);
            }
        };

        let next = match prompt.window {
            Some((_, last)) => {
                let mut cells = patch.cells.clone();
                cells.extend(current.cells[last + 1..].iter().cloned());
                current.with_patched_cells(&Notebook::from_cells(cells))
            }
            None => current.with_patched_cells(&patch),
        };
        eval = evaluate(ctx, cfg, &next);
        log.push(FixRecord {
            iteration,
            fix_type: fix,
            prompt: prompt.text,
            prompt_tokens: prompt.tokens,
            plan,
            response,
            patch_applied: true,
            pre_state,
            post_state: eval.outcome,
            tokens: usage,
            llm_calls: attempts,
            edit_sim_prev: notebook_similarity(&current, &next),
            edit_sim_baseline: notebook_similarity(&baseline_nb, &next),
            score: eval.score,
            runtime: eval.report.as_ref().map(|r| r.runtime),
            post_errors: eval.errors(),
            root_cause: None,
            failure: eval.failure.clone(),
        });
        current = next;
    };

    let final_errors = eval.errors();
    log.finish(eval.outcome, eval.score, final_errors, stats, failure);
    log.final_notebook = Some(current);
    log
}
