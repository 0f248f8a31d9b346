use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{AgentError, FixType, Mode};
use crate::backport::EnvironmentSpec;
use crate::exec::{INPUT_DIR, WORKING_DIR};
use crate::grader::{CompetitionSpec, Directionality};
use crate::notebook::{render_cells, Notebook, Tokenizer};

pub const DEFAULT_TOKEN_CUTOFF: usize = 13_485;

/// Appended verbatim to every prompt.
pub const RESPONSE_FORMAT: &str = "\
## Response format
Reply in exactly two parts:
1. A short plan: a numbered list of the changes you will make and the effect each one should have on the problem described above.
2. A single markdown code block (opened and closed with ```) holding the full updated notebook in the same cell-delimited format used above. Start every cell with a header line `### CELL <index> [code]` or `### CELL <index> [markdown]` followed by its source; prefix markdown lines with `# `. Do not include outputs or tracebacks.
";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub target: f64,
    /// Reproduced score; absent when no submission could be graded.
    pub current: Option<f64>,
    pub directionality: Directionality,
}

/// Everything a prompt is built from.
#[derive(Debug, Clone)]
pub struct PromptInput<'a> {
    pub fix: FixType,
    /// Current notebook, with the outputs of its last execution.
    pub notebook: &'a Notebook,
    pub comp: &'a CompetitionSpec,
    pub env: &'a EnvironmentSpec,
    pub scores: Scores,
    pub mode: Mode,
    pub time_limit: f64,
    /// Tracebacks of `!pip install` requirements that failed to install.
    pub install_failures: &'a [String],
    pub no_submission: bool,
    /// The last run was interrupted and outputs are incomplete.
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub fix: FixType,
    pub text: String,
    pub tokens: usize,
    /// Cell-level window `(first_error_cell, last_shown_cell)`.
    pub window: Option<(usize, usize)>,
}

fn instructions(input: &PromptInput<'_>) -> String {
    match input.fix {
        FixType::RuntimeReduction => format!(
            "## Goal: reduce runtime\n\
             The notebook did not finish within the {:.0}-second execution limit. Change it so the whole \
             notebook completes within the limit and still writes its submission. Look for library API \
             misuse that takes slow code paths, GPU acceleration that is available but not enabled, and \
             training or search work that can be cut without hurting the result. Keep the modelling \
             approach and the submission format.\n",
            input.time_limit
        ),
        FixType::ErrorRepair => "## Goal: repair errors\n\
             Running the notebook raised errors; each traceback is attached to the cell that raised it. \
             Fix the root causes so every cell runs under the environment below, most likely by adapting \
             code to changed library APIs. Preserve the original training and evaluation logic and the \
             submission format so the score stays close to the target.\n"
            .to_string(),
        FixType::ScoreCalibration => "## Goal: calibrate the score\n\
             The notebook runs without errors, but its score is not within the accepted band around the \
             target. A library's behavior has probably changed silently (for example a default parameter \
             or an algorithm detail). Find such changes and adjust the code so the score moves toward the \
             target, without replacing the notebook's approach.\n"
            .to_string(),
    }
}

fn fmt_score(s: f64) -> String {
    let text = format!("{s:.6}");
    let text = text.trim_end_matches('0');
    text.strip_suffix('.').unwrap_or(text).to_string()
}

/// Builds the prompt for one fix. In cell-level mode an error-repair prompt
/// shows cells `0..=k+1` only, where `k` is the first failing cell.
pub fn build_prompt(
    input: &PromptInput<'_>,
    tokenizer: &dyn Tokenizer,
    cutoff: usize,
) -> Result<Prompt, AgentError> {
    let nb = input.notebook;
    let window = match (input.mode, input.fix) {
        (Mode::CellLevel, FixType::ErrorRepair) => nb
            .first_error_cell()
            .map(|k| (k, (k + 1).min(nb.cells.len() - 1))),
        _ => None,
    };

    let mut p = instructions(input);
    if let Some((k, last)) = window {
        let _ = writeln!(
            p,
            "Only cells 0 to {last} are shown. Focus on fixing the error in cell {k}. Return exactly \
             the cells shown, updated as needed; cells after {last} stay as they are."
        );
    }

    let comp = input.comp;
    p.push_str("\n## Task\n");
    let _ = writeln!(p, "Competition: {}", comp.id);
    if !comp.description.trim().is_empty() {
        let _ = writeln!(p, "{}", comp.description.trim());
    }
    let _ = writeln!(
        p,
        "Evaluation metric: {} ({}).",
        comp.metric,
        comp.directionality.describe()
    );
    let _ = writeln!(
        p,
        "Submission columns: {} (id column `{}`).",
        comp.schema.columns.join(", "),
        comp.schema.id_column
    );

    p.push_str("\n## Execution environment\n");
    let _ = writeln!(p, "{}", input.env.describe());

    p.push_str("\n## I/O contract\n");
    let _ = writeln!(p, "Input data is read from {INPUT_DIR}.");
    let _ = writeln!(
        p,
        "The submission CSV must be written to {WORKING_DIR}{}.",
        comp.submission_filename
    );

    p.push_str("\n## Scores\n");
    let _ = writeln!(p, "Target score s_t: {}", fmt_score(input.scores.target));
    match input.scores.current {
        Some(s) => {
            let _ = writeln!(p, "Current score s_r: {}", fmt_score(s));
        }
        None => p.push_str("Current score s_r: none (no gradable submission)\n"),
    }
    let _ = writeln!(p, "Metric direction: {}.", input.scores.directionality.describe());
    if input.no_submission {
        p.push_str("Note: no submission file was produced by the last run.\n");
    }
    if input.partial {
        p.push_str("Note: the last run was interrupted; outputs and tracebacks below are partial.\n");
    }

    if !input.install_failures.is_empty() {
        p.push_str("\n## Dependency installation failures\n");
        for tb in input.install_failures {
            let _ = writeln!(p, "{}", tb.trim_end());
        }
    }

    p.push_str("\n## Notebook\n");
    let rendered = match window {
        Some((k, last)) => render_cells(&nb.cells[..=last], |c| c.index == k),
        None => render_cells(&nb.cells, |_| true),
    };
    p.push_str(&rendered);
    p.push('\n');
    p.push_str(RESPONSE_FORMAT);

    let tokens = tokenizer.count(&p);
    if tokens > cutoff {
        return Err(AgentError::TokenBudgetExceeded { tokens, cutoff });
    }
    Ok(Prompt {
        fix: input.fix,
        text: p,
        tokens,
        window,
    })
}
