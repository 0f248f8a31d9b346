//! Cell-delimited text rendering used in prompts and patches.
//!
//! ```text
//! ### CELL 0 [code]
//! import pandas as pd
//!
//! ### CELL 1 [markdown]
//! # # Heading
//! ```
//!
//! Every cell is a header line followed by its source and a newline; cells
//! are separated by exactly one blank line. Markdown lines are prefixed with
//! `# ` (or `#` for an empty line). When tracebacks are requested, a
//! [`TRACEBACK_MARKER`] line and the traceback follow the failing cell.

use std::sync::OnceLock;

use regex::Regex;

use super::{Cell, CellKind, Notebook, NotebookError};

pub const TRACEBACK_MARKER: &str = "### TRACEBACK";
const HEADER_PREFIX: &str = "### CELL";

fn header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^### CELL (\d+) \[(code|markdown)\][ \t]*$").unwrap())
}

fn comment_markdown(source: &str) -> String {
    source
        .split('\n')
        .map(|l| if l.is_empty() { "#".to_string() } else { format!("# {l}") })
        .collect::<Vec<_>>()
        .join("\n")
}

fn uncomment_markdown(body: &str) -> String {
    body.split('\n')
        .map(|l| {
            if l == "#" {
                ""
            } else {
                l.strip_prefix("# ").unwrap_or(l)
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Renders `cells` with their own indices. `with_traceback` decides per cell
/// whether a failing cell's traceback block is appended.
pub fn render_cells<'a>(
    cells: impl IntoIterator<Item = &'a Cell>,
    with_traceback: impl Fn(&Cell) -> bool,
) -> String {
    let blocks: Vec<String> = cells
        .into_iter()
        .map(|cell| {
            let body = match cell.kind {
                CellKind::Code => cell.source.clone(),
                CellKind::Markdown => comment_markdown(&cell.source),
            };
            let mut block = format!("{HEADER_PREFIX} {} [{}]\n{body}\n", cell.index, cell.kind);
            if with_traceback(cell) {
                if let Some(tb) = cell.traceback() {
                    block.push_str(TRACEBACK_MARKER);
                    block.push('\n');
                    block.push_str(tb.trim_end_matches('\n'));
                    block.push('\n');
                }
            }
            block
        })
        .collect();
    blocks.join("\n")
}

pub fn render_cell_delimited(nb: &Notebook, include_tracebacks: bool) -> String {
    render_cells(&nb.cells, |_| include_tracebacks)
}

enum Terminator {
    Header,
    Traceback,
    Eof,
}

/// Parses the cell-delimited format back into a notebook. Header numbers are
/// ignored and cells are indexed by order of appearance; traceback blocks and
/// any text before the first header are dropped.
pub fn parse_cell_delimited(text: &str) -> Result<Notebook, NotebookError> {
    let text = text.replace("\r\n", "\n");

    // (line start offset, line without newline)
    let mut lines = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        lines.push((offset, line.strip_suffix('\n').unwrap_or(line)));
        offset += line.len();
    }

    let mut headers = Vec::new();
    for (lineno, (start, line)) in lines.iter().enumerate() {
        if line.starts_with(HEADER_PREFIX) {
            let caps = header_re().captures(line).ok_or_else(|| {
                NotebookError::PatchParseError(format!(
                    "malformed cell header on line {}: `{line}`",
                    lineno + 1
                ))
            })?;
            let kind = if &caps[2] == "code" {
                CellKind::Code
            } else {
                CellKind::Markdown
            };
            headers.push((lineno, *start, line.len(), kind));
        }
    }
    if headers.is_empty() {
        return Err(NotebookError::PatchParseError(
            "no `### CELL` headers found".into(),
        ));
    }

    let mut cells = Vec::with_capacity(headers.len());
    for (h, &(lineno, start, len, kind)) in headers.iter().enumerate() {
        let body_start = (start + len + 1).min(text.len());
        let next_header = headers.get(h + 1).map(|&(l, ..)| l);
        let scan_end = next_header.unwrap_or(lines.len());
        let traceback_line = (lineno + 1..scan_end).find(|&l| lines[l].1.trim_end() == TRACEBACK_MARKER);

        let (body_end, terminator) = match (traceback_line, next_header) {
            (Some(l), _) => (lines[l].0, Terminator::Traceback),
            (None, Some(l)) => (lines[l].0, Terminator::Header),
            (None, None) => (text.len(), Terminator::Eof),
        };
        let mut body = &text[body_start..body_end.max(body_start)];
        body = body.strip_suffix('\n').unwrap_or(body);
        if matches!(terminator, Terminator::Header) {
            body = body.strip_suffix('\n').unwrap_or(body);
        }
        let source = match kind {
            CellKind::Code => body.to_string(),
            CellKind::Markdown => uncomment_markdown(body),
        };
        cells.push(match kind {
            CellKind::Code => Cell::code(source),
            CellKind::Markdown => Cell::markdown(source),
        });
    }
    Ok(Notebook::from_cells(cells))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::notebook::CellOutput;

    #[test]
    fn single_code_cell() {
        let nb = Notebook::from_cells([Cell::code("x=1")]);
        assert_eq!(render_cell_delimited(&nb, false), "### CELL 0 [code]\nx=1\n");
    }

    #[test]
    fn empty_notebook_renders_empty() {
        assert_eq!(render_cell_delimited(&Notebook::default(), true), "");
    }

    #[test]
    fn blank_line_between_cells_and_markdown_comments() {
        let nb = Notebook::from_cells([Cell::markdown("# T\n\nbody"), Cell::code("y=2")]);
        assert_eq!(
            render_cell_delimited(&nb, false),
            "### CELL 0 [markdown]\n# # T\n#\n# body\n\n### CELL 1 [code]\ny=2\n"
        );
    }

    #[test]
    fn traceback_block_follows_cell() {
        let mut cell = Cell::code("fit()");
        cell.outputs.push(CellOutput::error("Traceback\nValueError: bad"));
        let nb = Notebook::from_cells([cell, Cell::code("z")]);
        let text = render_cell_delimited(&nb, true);
        assert_eq!(
            text,
            "### CELL 0 [code]\nfit()\n### TRACEBACK\nTraceback\nValueError: bad\n\n### CELL 1 [code]\nz\n"
        );
        let back = parse_cell_delimited(&text).unwrap();
        assert_eq!(back.cells[0].source, "fit()");
        assert_eq!(back.cells[1].source, "z");
        assert!(back.cells[0].outputs.is_empty());
    }

    #[test]
    fn reindexes_by_appearance() {
        let text = "### CELL 7 [code]\na\n\n### CELL 2 [markdown]\n# b\n\n### CELL 0 [code]\nc\n";
        let nb = parse_cell_delimited(text).unwrap();
        let got: Vec<_> = nb.cells.iter().map(|c| (c.index, c.kind, c.source.as_str())).collect();
        assert_eq!(
            got,
            [
                (0, CellKind::Code, "a"),
                (1, CellKind::Markdown, "b"),
                (2, CellKind::Code, "c")
            ]
        );
    }

    #[test]
    fn free_text_is_rejected() {
        assert!(matches!(
            parse_cell_delimited("just some words\nno cells"),
            Err(NotebookError::PatchParseError(_))
        ));
        assert!(matches!(
            parse_cell_delimited("### CELL x [code]\nfoo"),
            Err(NotebookError::PatchParseError(_))
        ));
    }

    #[test]
    fn lenient_about_missing_separators_and_crlf() {
        let nb = parse_cell_delimited("preamble\r\n### CELL 0 [code]\r\nimport x\r\n### CELL 1 [code]\r\ny").unwrap();
        assert_eq!(nb.cells[0].source, "import x");
        assert_eq!(nb.cells[1].source, "y");
    }

    #[test]
    fn tricky_sources_round_trip() {
        let sources = ["", "\n", "a\n", "a\n\n", "\n\nb", "### not a header\n"];
        for (i, s) in sources.iter().enumerate() {
            let cells = vec![
                Cell::code(*s),
                Cell::markdown(*s),
                Cell::code(format!("mid{i}")),
            ];
            let nb = Notebook::from_cells(cells);
            let back = parse_cell_delimited(&render_cell_delimited(&nb, false)).unwrap();
            let a: Vec<_> = nb.cells.iter().map(|c| (c.kind, c.source.clone())).collect();
            let b: Vec<_> = back.cells.iter().map(|c| (c.kind, c.source.clone())).collect();
            assert_eq!(a, b, "source {s:?}");
        }
    }
}
