//! nbformat v4 JSON reading and writing.

use serde::Serialize;
use serde_json::{json, Map, Value};

use super::{strip_ansi, Cell, CellKind, CellOutput, Notebook, NotebookError, OutputKind};

/// Metadata namespace written by the runner and read back here.
pub(crate) const META_NS: &str = "nbrevive";

fn malformed(msg: impl Into<String>) -> NotebookError {
    NotebookError::MalformedNotebook(msg.into())
}

/// nbformat multiline strings are either a string or a list of strings.
fn multiline(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => parts
            .iter()
            .map(|p| p.as_str())
            .collect::<Option<Vec<_>>>()
            .map(|v| v.concat()),
        _ => None,
    }
}

/// Splits text into nbformat line-list form, each element keeping its `\n`.
fn to_line_list(text: &str) -> Value {
    Value::Array(
        text.split_inclusive('\n')
            .map(|l| Value::String(l.to_string()))
            .collect(),
    )
}

pub fn parse_notebook(bytes: &[u8]) -> Result<Notebook, NotebookError> {
    let root: Value =
        serde_json::from_slice(bytes).map_err(|e| malformed(format!("invalid JSON: {e}")))?;
    let Value::Object(mut root) = root else {
        return Err(malformed("top level is not an object"));
    };

    let major = root
        .get("nbformat")
        .and_then(Value::as_u64)
        .ok_or_else(|| malformed("missing integer key `nbformat`"))?;
    if major != 4 {
        return Err(NotebookError::UnsupportedFormat(major));
    }
    let minor = root
        .get("nbformat_minor")
        .and_then(Value::as_u64)
        .unwrap_or(0);

    let cells = match root.remove("cells") {
        Some(Value::Array(cells)) => cells,
        Some(_) => return Err(malformed("`cells` is not a list")),
        None => return Err(malformed("missing key `cells`")),
    };
    let metadata = match root.remove("metadata") {
        Some(Value::Object(m)) => m,
        Some(_) => return Err(malformed("`metadata` is not an object")),
        None => Map::new(),
    };
    root.remove("nbformat");
    root.remove("nbformat_minor");

    let cells = cells
        .into_iter()
        .enumerate()
        .map(|(i, c)| parse_cell(i, c))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(Notebook {
        format_version: (4, minor as u32),
        cells,
        metadata,
        extra: root,
    })
}

fn parse_cell(index: usize, value: Value) -> Result<Cell, NotebookError> {
    let Value::Object(raw) = value else {
        return Err(malformed(format!("cell {index} is not an object")));
    };
    let kind = match raw.get("cell_type").and_then(Value::as_str) {
        Some("code") => CellKind::Code,
        // Raw cells are modelled as markdown; their original type survives
        // in `raw` for re-serialization.
        Some("markdown") | Some("raw") => CellKind::Markdown,
        Some(other) => return Err(malformed(format!("cell {index}: unknown cell_type `{other}`"))),
        None => return Err(malformed(format!("cell {index}: missing `cell_type`"))),
    };
    let source = raw
        .get("source")
        .and_then(multiline)
        .ok_or_else(|| malformed(format!("cell {index}: missing or invalid `source`")))?;

    let outputs = if kind == CellKind::Code {
        match raw.get("outputs") {
            Some(Value::Array(outs)) => outs
                .iter()
                .map(|o| parse_output(index, o))
                .collect::<Result<Vec<_>, _>>()?,
            Some(Value::Null) | None => Vec::new(),
            Some(_) => return Err(malformed(format!("cell {index}: `outputs` is not a list"))),
        }
    } else {
        Vec::new()
    };

    let exec_time = raw.get("metadata").and_then(|m| {
        m.get(META_NS)
            .and_then(|n| n.get("exec_time"))
            .or_else(|| m.get("papermill").and_then(|p| p.get("duration")))
            .and_then(Value::as_f64)
    });

    Ok(Cell {
        index,
        kind,
        source,
        outputs,
        exec_time,
        raw: Some(raw),
    })
}

fn parse_output(cell: usize, value: &Value) -> Result<CellOutput, NotebookError> {
    let obj = value
        .as_object()
        .ok_or_else(|| malformed(format!("cell {cell}: output is not an object")))?;
    let output_type = obj
        .get("output_type")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed(format!("cell {cell}: output without `output_type`")))?;

    let mut out = match output_type {
        "stream" => CellOutput::stream(obj.get("text").and_then(multiline).unwrap_or_default()),
        "display_data" | "execute_result" | "update_display_data" => CellOutput::display(
            obj.get("data")
                .and_then(|d| d.get("text/plain"))
                .and_then(multiline)
                .unwrap_or_default(),
        ),
        "error" => {
            let ename = obj.get("ename").and_then(Value::as_str).unwrap_or("");
            let evalue = obj.get("evalue").and_then(Value::as_str).unwrap_or("");
            let lines: Vec<String> = obj
                .get("traceback")
                .and_then(Value::as_array)
                .map(|a| {
                    a.iter()
                        .filter_map(Value::as_str)
                        .map(strip_ansi)
                        .collect()
                })
                .unwrap_or_default();
            let mut tb = lines.join("\n");
            let summary = if evalue.is_empty() {
                ename.to_string()
            } else {
                format!("{ename}: {evalue}")
            };
            // Kernels normally end the traceback with the summary line; make
            // sure it is there so the class can be recovered from text alone.
            if !ename.is_empty() && !tb.trim_end().ends_with(summary.trim_end()) {
                if !tb.is_empty() {
                    tb.push('\n');
                }
                tb.push_str(&summary);
            }
            let mut out = CellOutput::error(tb);
            if !ename.is_empty() {
                out.exception_class = Some(ename.rsplit('.').next().unwrap_or(ename).to_string());
            }
            out
        }
        other => {
            return Err(malformed(format!(
                "cell {cell}: unknown output_type `{other}`"
            )))
        }
    };
    out.raw = Some(value.clone());
    Ok(out)
}

fn output_to_json(out: &CellOutput) -> Value {
    if let Some(raw) = &out.raw {
        return raw.clone();
    }
    match out.kind {
        OutputKind::Stream => json!({
            "output_type": "stream",
            "name": "stdout",
            "text": to_line_list(&out.text),
        }),
        OutputKind::Display => json!({
            "output_type": "display_data",
            "data": { "text/plain": to_line_list(&out.text) },
            "metadata": {},
        }),
        OutputKind::Error => {
            let tb = out.traceback.clone().unwrap_or_default();
            let ename = out.exception_class.clone().unwrap_or_default();
            let evalue = out
                .text
                .split_once(": ")
                .map(|(_, v)| v.to_string())
                .unwrap_or_default();
            json!({
                "output_type": "error",
                "ename": ename,
                "evalue": evalue,
                "traceback": tb.lines().collect::<Vec<_>>(),
            })
        }
    }
}

fn cell_to_json(cell: &Cell, with_ids: bool) -> Value {
    let mut obj = match &cell.raw {
        Some(raw) => raw.clone(),
        None => {
            let mut m = Map::new();
            m.insert("cell_type".into(), Value::String(cell.kind.as_str().into()));
            if with_ids {
                m.insert("id".into(), Value::String(format!("cell-{}", cell.index)));
            }
            m.insert("metadata".into(), Value::Object(Map::new()));
            m
        }
    };

    let source_unchanged = obj
        .get("source")
        .and_then(multiline)
        .is_some_and(|s| s == cell.source);
    if !source_unchanged {
        obj.insert("source".into(), to_line_list(&cell.source));
    }

    if cell.kind == CellKind::Code {
        obj.entry("execution_count").or_insert(Value::Null);
        obj.insert(
            "outputs".into(),
            Value::Array(cell.outputs.iter().map(output_to_json).collect()),
        );
        if let Some(t) = cell.exec_time {
            let meta = obj
                .entry("metadata")
                .or_insert_with(|| Value::Object(Map::new()));
            if let Value::Object(meta) = meta {
                let ns = meta
                    .entry(META_NS)
                    .or_insert_with(|| Value::Object(Map::new()));
                if let Value::Object(ns) = ns {
                    ns.insert("exec_time".into(), json!(t));
                }
            }
        }
    }
    Value::Object(obj)
}

pub(crate) fn serialize(nb: &Notebook) -> String {
    let with_ids = nb.format_version.1 >= 5;
    let mut root = Map::new();
    root.insert(
        "cells".into(),
        Value::Array(nb.cells.iter().map(|c| cell_to_json(c, with_ids)).collect()),
    );
    root.insert("metadata".into(), Value::Object(nb.metadata.clone()));
    root.insert("nbformat".into(), json!(nb.format_version.0));
    root.insert("nbformat_minor".into(), json!(nb.format_version.1));
    for (k, v) in &nb.extra {
        root.insert(k.clone(), v.clone());
    }

    let mut buf = Vec::new();
    let fmt = serde_json::ser::PrettyFormatter::with_indent(b" ");
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    Value::Object(root)
        .serialize(&mut ser)
        .expect("serializing a JSON value cannot fail");
    let mut text = String::from_utf8(buf).expect("serde_json emits UTF-8");
    text.push('\n');
    text
}
