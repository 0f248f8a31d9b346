//! Shell-escape install directives (`!pip install ...`, `%pip install ...`).

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{CellKind, Notebook};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "version", rename_all = "snake_case")]
pub enum Constraint {
    Exact(String),
    AtMost(String),
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RequirementSpec {
    pub package: String,
    pub constraint: Constraint,
}

impl RequirementSpec {
    pub fn new(package: &str, constraint: Constraint) -> Self {
        RequirementSpec {
            package: normalize_package_name(package),
            constraint,
        }
    }
}

impl fmt::Display for RequirementSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.constraint {
            Constraint::Exact(v) => write!(f, "{}=={v}", self.package),
            Constraint::AtMost(v) => write!(f, "{}<={v}", self.package),
            Constraint::None => f.write_str(&self.package),
        }
    }
}

/// Lowercases and collapses runs of `-`, `_` and `.` into a single `-`.
pub fn normalize_package_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut pending_sep = false;
    for c in name.trim().chars() {
        if matches!(c, '-' | '_' | '.') {
            pending_sep = true;
        } else {
            if pending_sep && !out.is_empty() {
                out.push('-');
            }
            pending_sep = false;
            out.extend(c.to_lowercase());
        }
    }
    out
}

/// Flags that consume the following token.
const VALUE_FLAGS: &[&str] = &[
    "-r", "--requirement", "-c", "--constraint", "-e", "--editable", "-i", "--index-url",
    "--extra-index-url", "-f", "--find-links", "-t", "--target", "--prefix", "--root",
    "--src", "--trusted-host", "--platform", "--python-version", "--implementation",
    "--abi", "--progress-bar", "--cache-dir", "--log", "--proxy", "--retries", "--timeout",
];

const SHELL_STOPS: &[&str] = &["&&", "||", ";", "|", ">", ">>", "2>", "2>&1", "&>", "&"];

/// Splits on whitespace, honouring single and double quotes.
fn shell_split(line: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let mut quote: Option<char> = None;
    let mut in_token = false;
    for c in line.chars() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => cur.push(c),
            None if c == '\'' || c == '"' => {
                quote = Some(c);
                in_token = true;
            }
            None if c.is_whitespace() => {
                if in_token {
                    tokens.push(std::mem::take(&mut cur));
                    in_token = false;
                }
            }
            None => {
                cur.push(c);
                in_token = true;
            }
        }
    }
    if in_token {
        tokens.push(cur);
    }
    tokens
}

/// Returns the argument tokens after `install` if `line` is an install
/// directive.
fn directive_args(line: &str) -> Option<Vec<String>> {
    let line = line.trim();
    let rest = line.strip_prefix('!').or_else(|| line.strip_prefix('%'))?;
    let tokens = shell_split(rest);
    let mut it = tokens.into_iter().peekable();
    match it.next()?.as_str() {
        "pip" | "pip3" => {}
        "python" | "python3" => {
            if it.next()? != "-m" || !matches!(it.next()?.as_str(), "pip" | "pip3") {
                return None;
            }
        }
        _ => return None,
    }
    // global options may precede the subcommand, e.g. `pip -q install`
    while it.peek().is_some_and(|t| t.starts_with('-')) {
        it.next();
    }
    (it.next()? == "install").then(|| it.collect())
}

fn parse_requirement(token: &str) -> Option<RequirementSpec> {
    let token = token.trim().trim_end_matches(',');
    if token.is_empty() || token.contains("://") || token.contains('/') || token.starts_with('.') {
        return None;
    }
    let (name_part, constraint) = if let Some((n, v)) = token.split_once("==") {
        (n, Constraint::Exact(v.trim().to_string()))
    } else if let Some((n, v)) = token.split_once("<=") {
        (n, Constraint::AtMost(v.trim().to_string()))
    } else if let Some((n, _)) = token.split_once(">=") {
        log::warn!("install directive `{token}` uses a lower bound; recorded without constraint");
        (n, Constraint::None)
    } else if token.contains(['<', '>', '~', '!', '=', '@', ';']) {
        return None;
    } else {
        (token, Constraint::None)
    };
    // drop extras: pkg[extra]
    let name = name_part.split('[').next().unwrap_or(name_part).trim();
    let valid = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    let version_ok = match &constraint {
        Constraint::Exact(v) | Constraint::AtMost(v) => {
            !v.is_empty() && !v.contains([',', '<', '>', '=', ' '])
        }
        Constraint::None => true,
    };
    (valid && version_ok).then(|| RequirementSpec::new(name, constraint))
}

/// Collects requirements from install directives in code cells, in cell
/// and line order. Unparseable package arguments are skipped with a warning.
pub fn extract_pip_installs(nb: &Notebook) -> Vec<RequirementSpec> {
    let mut specs = Vec::new();
    for cell in nb.cells.iter().filter(|c| c.kind == CellKind::Code) {
        for line in cell.source.lines() {
            let Some(args) = directive_args(line) else {
                continue;
            };
            let mut args = args.into_iter();
            while let Some(arg) = args.next() {
                if SHELL_STOPS.contains(&arg.as_str()) || arg.starts_with('>') || arg.starts_with("2>") {
                    break;
                }
                if arg.starts_with('-') {
                    if VALUE_FLAGS.contains(&arg.as_str()) {
                        args.next();
                    }
                    continue;
                }
                match parse_requirement(&arg) {
                    Some(spec) => specs.push(spec),
                    None => log::warn!(
                        "cell {}: skipping unparseable install argument `{arg}`",
                        cell.index
                    ),
                }
            }
        }
    }
    specs
}
