//! Tab-delimited table reading and writing.
//!
//! All exported data files share one shape: `# key = value` metadata lines,
//! one header row naming the columns, then data rows. Values are written
//! with Rust's shortest round-trip float formatting so a parse-back is
//! bit-exact and identical runs produce identical bytes.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("table has no header row")]
    MissingHeader,
    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("row {row}, column {column}: unparseable number {token:?}")]
    BadNumber { row: usize, column: String, token: String },
    #[error("metadata line {0:?} is not `# key = value`")]
    BadMetadata(String),
}

/// In-memory representation of a delimited table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Self { metadata: Vec::new(), columns, rows: Vec::new() }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.metadata.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get_meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn push_row(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    /// Render to the delimited text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let _ = writeln!(out, "{}", self.columns.join("\t"));
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(out, "{}", line.join("\t"));
        }
        out
    }

    /// Parse the delimited text format.
    pub fn from_text(text: &str) -> Result<Self, TableError> {
        let mut metadata = Vec::new();
        let mut columns: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if rest.is_empty() {
                    continue;
                }
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| TableError::BadMetadata(line.to_string()))?;
                metadata.push((k.trim().to_string(), v.trim().to_string()));
                continue;
            }
            match &columns {
                None => {
                    columns = Some(line.split('\t').map(|s| s.to_string()).collect());
                }
                Some(cols) => {
                    let fields: Vec<&str> = line.split('\t').collect();
                    if fields.len() != cols.len() {
                        return Err(TableError::RaggedRow {
                            row: lineno,
                            expected: cols.len(),
                            found: fields.len(),
                        });
                    }
                    let mut row = Vec::with_capacity(fields.len());
                    for (ci, tok) in fields.iter().enumerate() {
                        let v: f64 = tok.parse().map_err(|_| TableError::BadNumber {
                            row: lineno,
                            column: cols[ci].clone(),
                            token: tok.to_string(),
                        })?;
                        row.push(v);
                    }
                    rows.push(row);
                }
            }
        }
        let columns = columns.ok_or(TableError::MissingHeader)?;
        Ok(Self { metadata, columns, rows })
    }
}

/// FNV-1a hash of a string, used for layout/config fingerprints in file
/// metadata blocks.
pub fn fnv1a_hex(text: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}
