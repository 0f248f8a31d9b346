use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GradeError, SubmissionSchema};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    EmptyFile,
    MissingColumn { column: String },
    UnexpectedColumn { column: String },
    ColumnOrder { expected: Vec<String>, found: Vec<String> },
    RowCountMismatch { expected: usize, found: usize },
    UnknownId { id: String },
    MissingId { id: String },
    DuplicateId { id: String },
    UnparseableValue { row: usize, column: String, value: String },
    MalformedCsv { message: String },
    /// Values parse but fall outside the metric's domain.
    UnscorableValues { message: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyFile => write!(f, "submission is empty"),
            Violation::MissingColumn { column } => write!(f, "missing column `{column}`"),
            Violation::UnexpectedColumn { column } => write!(f, "unexpected column `{column}`"),
            Violation::ColumnOrder { expected, found } => {
                write!(f, "column order {found:?}, expected {expected:?}")
            }
            Violation::RowCountMismatch { expected, found } => {
                write!(f, "{found} rows, expected {expected}")
            }
            Violation::UnknownId { id } => write!(f, "unknown id `{id}`"),
            Violation::MissingId { id } => write!(f, "missing id `{id}`"),
            Violation::DuplicateId { id } => write!(f, "duplicate id `{id}`"),
            Violation::UnparseableValue { row, column, value } => {
                write!(f, "row {row}, column `{column}`: cannot parse `{value}`")
            }
            Violation::MalformedCsv { message } => write!(f, "malformed CSV: {message}"),
            Violation::UnscorableValues { message } => write!(f, "cannot score: {message}"),
        }
    }
}

/// Ground-truth table: id column plus the schema's prediction columns, in
/// schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub ids: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl GroundTruth {
    pub fn from_csv(text: &str, schema: &SubmissionSchema) -> Result<Self, GradeError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| GradeError::GroundTruth(e.to_string()))?
            .clone();
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| GradeError::GroundTruth(format!("missing column `{name}`")))
        };
        let id_pos = find(&schema.id_column)?;
        let cols = schema
            .prediction_columns()
            .map(|c| find(c))
            .collect::<Result<Vec<_>, _>>()?;
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| GradeError::GroundTruth(e.to_string()))?;
            let id = rec.get(id_pos).unwrap_or("").to_string();
            if !seen.insert(id.clone()) {
                return Err(GradeError::GroundTruth(format!("duplicate id `{id}`")));
            }
            rows.push(cols.iter().map(|&c| rec.get(c).unwrap_or("").to_string()).collect());
            ids.push(id);
        }
        Ok(GroundTruth { ids, rows })
    }

    pub fn load(path: &Path, schema: &SubmissionSchema) -> Result<Self, GradeError> {
        let text = std::fs::read_to_string(path).map_err(|source| GradeError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_csv(&text, schema)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Checks a submission against the schema and ground truth. On success the
/// prediction rows are returned aligned with `truth.ids`.
pub fn validate_submission(
    csv_text: &str,
    schema: &SubmissionSchema,
    truth: &GroundTruth,
    numeric: bool,
) -> Result<Vec<Vec<String>>, Vec<Violation>> {
    if csv_text.trim().is_empty() {
        return Err(vec![Violation::EmptyFile]);
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(csv_text.as_bytes());
    let headers: Vec<String> = match reader.headers() {
        Ok(h) => h.iter().map(str::to_string).collect(),
        Err(e) => {
            return Err(vec![Violation::MalformedCsv {
                message: e.to_string(),
            }])
        }
    };

    let mut violations = Vec::new();
    for col in &schema.columns {
        if !headers.contains(col) {
            violations.push(Violation::MissingColumn { column: col.clone() });
        }
    }
    for col in &headers {
        if !schema.columns.contains(col) {
            violations.push(Violation::UnexpectedColumn { column: col.clone() });
        }
    }
    if violations.is_empty() && headers != schema.columns {
        violations.push(Violation::ColumnOrder {
            expected: schema.columns.clone(),
            found: headers.clone(),
        });
    }
    if !violations.is_empty() {
        return Err(violations);
    }

    let id_pos = headers
        .iter()
        .position(|h| *h == schema.id_column)
        .expect("schema columns present");
    let pred_cols: Vec<(usize, &String)> = schema
        .prediction_columns()
        .map(|c| (headers.iter().position(|h| h == c).expect("present"), c))
        .collect();

    let truth_index: HashMap<&str, usize> = truth
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut aligned: Vec<Option<Vec<String>>> = vec![None; truth.len()];
    let mut found = 0usize;
    for (row, rec) in reader.records().enumerate() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                violations.push(Violation::MalformedCsv {
                    message: e.to_string(),
                });
                continue;
            }
        };
        found += 1;
        let id = rec.get(id_pos).unwrap_or("");
        let values: Vec<String> = pred_cols
            .iter()
            .map(|&(pos, _)| rec.get(pos).unwrap_or("").to_string())
            .collect();
        for ((_, col), v) in pred_cols.iter().zip(&values) {
            let bad = v.is_empty() || (numeric && !v.parse::<f64>().is_ok_and(f64::is_finite));
            if bad {
                violations.push(Violation::UnparseableValue {
                    row: row + 1,
                    column: (*col).clone(),
                    value: v.clone(),
                });
            }
        }
        match truth_index.get(id) {
            None => violations.push(Violation::UnknownId { id: id.to_string() }),
            Some(&i) if aligned[i].is_some() => {
                violations.push(Violation::DuplicateId { id: id.to_string() })
            }
            Some(&i) => aligned[i] = Some(values),
        }
    }
    if found != truth.len() {
        violations.push(Violation::RowCountMismatch {
            expected: truth.len(),
            found,
        });
    }
    for (i, slot) in aligned.iter().enumerate() {
        if slot.is_none() {
            violations.push(Violation::MissingId {
                id: truth.ids[i].clone(),
            });
        }
    }
    if violations.is_empty() {
        Ok(aligned.into_iter().map(|r| r.expect("all ids present")).collect())
    } else {
        Err(violations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> SubmissionSchema {
        SubmissionSchema {
            id_column: "Id".into(),
            columns: vec!["Id".into(), "Cover_Type".into()],
        }
    }

    fn truth() -> GroundTruth {
        GroundTruth::from_csv("Id,Cover_Type\n1,2\n2,1\n3,7\n", &schema()).unwrap()
    }

    #[test]
    fn matching_csv_ok_and_aligned() {
        let rows =
            validate_submission("Id,Cover_Type\n3,7\n1,2\n2,1\n", &schema(), &truth(), false).unwrap();
        assert_eq!(rows, vec![vec!["2"], vec!["1"], vec!["7"]]);
    }

    #[test]
    fn missing_prediction_column() {
        let v = validate_submission("Id\n1\n2\n3\n", &schema(), &truth(), false).unwrap_err();
        assert_eq!(
            v,
            vec![Violation::MissingColumn {
                column: "Cover_Type".into()
            }]
        );
    }

    #[test]
    fn extra_unknown_id() {
        let v = validate_submission("Id,Cover_Type\n1,2\n2,1\n3,7\n99,1\n", &schema(), &truth(), false)
            .unwrap_err();
        assert!(v.contains(&Violation::UnknownId { id: "99".into() }));
        assert!(v.contains(&Violation::RowCountMismatch { expected: 3, found: 4 }));
    }

    #[test]
    fn missing_and_duplicate_ids() {
        let v = validate_submission("Id,Cover_Type\n1,2\n1,2\n2,1\n", &schema(), &truth(), false)
            .unwrap_err();
        assert!(v.contains(&Violation::DuplicateId { id: "1".into() }));
        assert!(v.contains(&Violation::MissingId { id: "3".into() }));
    }

    #[test]
    fn column_order_and_unparseable() {
        let v = validate_submission("Cover_Type,Id\n2,1\n1,2\n7,3\n", &schema(), &truth(), false)
            .unwrap_err();
        assert!(matches!(v[0], Violation::ColumnOrder { .. }));
        let v = validate_submission("Id,Cover_Type\n1,x\n2,1\n3,7\n", &schema(), &truth(), true)
            .unwrap_err();
        assert_eq!(
            v,
            vec![Violation::UnparseableValue {
                row: 1,
                column: "Cover_Type".into(),
                value: "x".into()
            }]
        );
    }

    #[test]
    fn ragged_rows_are_malformed() {
        let v = validate_submission("Id,Cover_Type\n1,2,3\n2,1\n3,7\n", &schema(), &truth(), false)
            .unwrap_err();
        assert!(v.iter().any(|x| matches!(x, Violation::MalformedCsv { .. })));
    }

    #[test]
    fn empty_submission() {
        assert_eq!(
            validate_submission("", &schema(), &truth(), false).unwrap_err(),
            vec![Violation::EmptyFile]
        );
    }
}
