//! NSL-KDD record parsing.

use std::io::BufRead;

use super::DataError;

/// Number of raw feature columns in an NSL-KDD record.
pub const RAW_FEATURES: usize = 41;
/// Number of numeric raw feature columns.
pub const NUMERIC_FEATURES: usize = 38;

/// Raw column positions of the categorical fields.
pub const PROTOCOL_COLUMN: usize = 1;
pub const SERVICE_COLUMN: usize = 2;
pub const FLAG_COLUMN: usize = 3;

/// One parsed connection record.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    /// The 38 numeric features in file order (categorical columns skipped).
    pub numeric: [f64; NUMERIC_FEATURES],
    pub protocol: String,
    pub service: String,
    pub flag: String,
    pub label: String,
}

impl Record {
    pub fn is_normal(&self) -> bool {
        self.label == "normal"
    }
}

/// Parsed rows of one NSL-KDD file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordSet {
    pub rows: Vec<Record>,
    pub source_name: String,
}

impl RecordSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Subset by row index, preserving the given order.
    pub fn select(&self, indices: &[usize]) -> RecordSet {
        RecordSet {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            source_name: self.source_name.clone(),
        }
    }
}

/// Parses comma-separated NSL-KDD text: one record per line, no header.
///
/// Lines carry 42 fields (41 features and the label). When
/// `allow_difficulty_column` is set, a 43rd trailing difficulty integer is
/// accepted and discarded. Blank lines are skipped.
pub fn parse_csv<R: BufRead>(
    reader: R,
    allow_difficulty_column: bool,
    source_name: &str,
) -> Result<RecordSet, DataError> {
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DataError::Io {
            path: source_name.to_string(),
            source: e,
        })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        rows.push(parse_line(line, line_no, allow_difficulty_column)?);
    }
    Ok(RecordSet {
        rows,
        source_name: source_name.to_string(),
    })
}

/// Convenience wrapper for in-memory input.
pub fn parse_bytes(bytes: &[u8], allow_difficulty_column: bool) -> Result<RecordSet, DataError> {
    parse_csv(bytes, allow_difficulty_column, "<memory>")
}

fn parse_line(line: &str, line_no: usize, allow_difficulty: bool) -> Result<Record, DataError> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    let expected = if allow_difficulty {
        "42 or 43"
    } else {
        "42"
    };
    let ok = fields.len() == RAW_FEATURES + 1 || (allow_difficulty && fields.len() == RAW_FEATURES + 2);
    if !ok {
        return Err(DataError::Malformed {
            line: line_no,
            column: None,
            message: format!("expected {expected} fields, found {}", fields.len()),
        });
    }
    if fields.len() == RAW_FEATURES + 2 {
        let diff = fields[RAW_FEATURES + 1];
        if diff.parse::<i64>().is_err() {
            return Err(DataError::Malformed {
                line: line_no,
                column: Some(RAW_FEATURES + 2),
                message: format!("difficulty {diff:?} is not an integer"),
            });
        }
    }

    let mut numeric = [0.0; NUMERIC_FEATURES];
    let mut slot = 0;
    for (col, raw) in fields[..RAW_FEATURES].iter().enumerate() {
        match col {
            PROTOCOL_COLUMN | SERVICE_COLUMN | FLAG_COLUMN => {
                if raw.is_empty() {
                    return Err(DataError::Malformed {
                        line: line_no,
                        column: Some(col + 1),
                        message: "empty categorical token".into(),
                    });
                }
            }
            _ => {
                let value: f64 = raw.parse().map_err(|_| DataError::Malformed {
                    line: line_no,
                    column: Some(col + 1),
                    message: format!("cannot parse {raw:?} as a number"),
                })?;
                if !value.is_finite() {
                    return Err(DataError::Malformed {
                        line: line_no,
                        column: Some(col + 1),
                        message: format!("non-finite value {raw:?}"),
                    });
                }
                numeric[slot] = value;
                slot += 1;
            }
        }
    }

    let label = fields[RAW_FEATURES];
    if label.is_empty() {
        return Err(DataError::Malformed {
            line: line_no,
            column: Some(RAW_FEATURES + 1),
            message: "empty label".into(),
        });
    }

    Ok(Record {
        numeric,
        protocol: fields[PROTOCOL_COLUMN].to_string(),
        service: fields[SERVICE_COLUMN].to_string(),
        flag: fields[FLAG_COLUMN].to_string(),
        label: label.to_string(),
    })
}
