use super::AgentError;
use crate::notebook::{parse_cell_delimited, Notebook};

fn is_open_fence(line: &str) -> bool {
    line.trim_end()
        .strip_prefix("```")
        .is_some_and(|tag| tag.chars().all(|c| c.is_alphanumeric() || "+-_".contains(c)))
}

fn is_close_fence(line: &str) -> bool {
    line.trim_end() == "```"
}

/// Splits a plan -> patch response. The last complete fenced block is the
/// patch; the text before it is the plan.
pub fn parse_response(text: &str) -> Result<(String, Notebook), AgentError> {
    let text = text.replace("\r\n", "\n");
    let lines: Vec<&str> = text.split('\n').collect();
    let mut blocks: Vec<(usize, usize)> = Vec::new();
    let mut open: Option<usize> = None;
    for (i, line) in lines.iter().enumerate() {
        match open {
            None if is_open_fence(line) => open = Some(i),
            Some(start) if is_close_fence(line) => {
                blocks.push((start, i));
                open = None;
            }
            _ => {}
        }
    }
    let &(start, end) = blocks.last().ok_or(AgentError::NoCodeBlock)?;
    if blocks.len() > 1 {
        log::warn!("response has {} code blocks; using the last", blocks.len());
    }
    let plan = lines[..start].join("\n").trim().to_string();
    let body = lines[start + 1..end].join("\n");
    Ok((plan, parse_cell_delimited(&body)?))
}
