//! Immutable tabular snapshots.
//!
//! A [`TabularDataset`] is a typed table whose cells are numbers, text, or a
//! missing marker. Every snapshot carries a content fingerprint computed at
//! construction; transforms never mutate a snapshot, they build a new one.

mod csv_io;
mod fingerprint;
mod infer;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csv_io::{read_csv_path, read_csv_str, read_raw_path, read_raw_str, to_csv_string, write_csv_path};
pub use fingerprint::dataset_fingerprint;
pub use infer::{infer_column_kind, is_identifier_name, is_missing_marker};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("table has no columns")]
    NoColumns,
    #[error("empty column name at position {0}")]
    EmptyColumnName(usize),
    #[error("duplicate column name '{0}'")]
    DuplicateColumn(String),
    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow { row: usize, found: usize, expected: usize },
    #[error("text value in numeric column '{column}' at row {row}")]
    TextInNumericColumn { column: String, row: usize },
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// A single table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Text(String),
    Missing,
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Canonical rendering used for CSV output and categorical level names.
    pub fn render(&self) -> String {
        match self {
            Cell::Num(v) => format_number(*v),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    /// Bitwise identity: distinguishes `-0.0` from `0.0` and treats equal NaN payloads as equal.
    pub fn identical(&self, other: &Cell) -> bool {
        match (self, other) {
            (Cell::Num(a), Cell::Num(b)) => a.to_bits() == b.to_bits(),
            (Cell::Text(a), Cell::Text(b)) => a == b,
            (Cell::Missing, Cell::Missing) => true,
            _ => false,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Shortest round-trip decimal rendering.
pub fn format_number(v: f64) -> String {
    format!("{v}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Text,
    Identifier,
}

impl ColumnKind {
    pub fn tag(self) -> &'static str {
        match self {
            ColumnKind::Numeric => "numeric",
            ColumnKind::Categorical => "categorical",
            ColumnKind::Text => "text",
            ColumnKind::Identifier => "identifier",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
    pub missing_count: usize,
}

/// Immutable typed table. Construct with [`TabularDataset::new`] or [`validate_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    columns: Vec<ColumnMeta>,
    rows: Vec<Vec<Cell>>,
    fingerprint: String,
}

impl TabularDataset {
    /// Builds a snapshot from an explicit schema. Text cells in numeric
    /// columns are rejected; missing counts and the fingerprint are derived.
    pub fn new(schema: Vec<(String, ColumnKind)>, rows: Vec<Vec<Cell>>) -> Result<Self> {
        if schema.is_empty() {
            return Err(DatasetError::NoColumns);
        }
        let mut seen = HashSet::new();
        for (i, (name, _)) in schema.iter().enumerate() {
            if name.is_empty() {
                return Err(DatasetError::EmptyColumnName(i));
            }
            if !seen.insert(name.as_str()) {
                return Err(DatasetError::DuplicateColumn(name.clone()));
            }
        }
        let width = schema.len();
        let mut missing = vec![0usize; width];
        for (r, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(DatasetError::RaggedRow { row: r, found: row.len(), expected: width });
            }
            for (c, cell) in row.iter().enumerate() {
                match cell {
                    Cell::Missing => missing[c] += 1,
                    Cell::Text(_) if schema[c].1 == ColumnKind::Numeric => {
                        return Err(DatasetError::TextInNumericColumn {
                            column: schema[c].0.clone(),
                            row: r,
                        })
                    }
                    _ => {}
                }
            }
        }
        let columns: Vec<ColumnMeta> = schema
            .into_iter()
            .zip(missing)
            .map(|((name, kind), missing_count)| ColumnMeta { name, kind, missing_count })
            .collect();
        let fingerprint = fingerprint::compute(&columns, &rows);
        Ok(Self { columns, rows, fingerprint })
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn column_count(&self) -> usize {
        self.columns.len()
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn require_column(&self, name: &str) -> Result<usize> {
        self.column_index(name).ok_or_else(|| DatasetError::UnknownColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Option<&ColumnMeta> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn kind_of(&self, name: &str) -> Option<ColumnKind> {
        self.column(name).map(|c| c.kind)
    }

    pub fn schema(&self) -> Vec<(String, ColumnKind)> {
        self.columns.iter().map(|c| (c.name.clone(), c.kind)).collect()
    }

    pub fn cell(&self, row: usize, col: usize) -> &Cell {
        &self.rows[row][col]
    }

    /// Column values in row order.
    pub fn column_cells(&self, col: usize) -> impl Iterator<Item = &Cell> + '_ {
        self.rows.iter().map(move |r| &r[col])
    }

    /// Numeric values of a column with `None` for missing or text cells.
    pub fn numeric_column(&self, col: usize) -> Vec<Option<f64>> {
        self.column_cells(col).map(Cell::as_f64).collect()
    }

    pub fn total_missing(&self) -> usize {
        self.columns.iter().map(|c| c.missing_count).sum()
    }

    pub fn row_has_missing(&self, row: usize) -> bool {
        self.rows[row].iter().any(Cell::is_missing)
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let rows = indices.iter().map(|&i| self.rows[i].clone()).collect();
        Self::new(self.schema(), rows)
    }

    /// Keeps rows for which `keep` returns true.
    pub fn filter_rows(&self, mut keep: impl FnMut(usize, &[Cell]) -> bool) -> Result<Self> {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .filter(|(i, r)| keep(*i, r))
            .map(|(_, r)| r.clone())
            .collect();
        Self::new(self.schema(), rows)
    }

    /// Drops the named columns. Unknown names are an error.
    pub fn drop_columns(&self, names: &[String]) -> Result<Self> {
        let mut drop = HashSet::new();
        for n in names {
            drop.insert(self.require_column(n)?);
        }
        let keep: Vec<usize> = (0..self.columns.len()).filter(|i| !drop.contains(i)).collect();
        let schema = keep.iter().map(|&i| (self.columns[i].name.clone(), self.columns[i].kind)).collect();
        let rows = self
            .rows
            .iter()
            .map(|r| keep.iter().map(|&i| r[i].clone()).collect())
            .collect();
        Self::new(schema, rows)
    }

    /// Replaces one column's cells (same kind unless `kind` is given).
    pub fn with_column(&self, col: usize, cells: Vec<Cell>, kind: Option<ColumnKind>) -> Result<Self> {
        let mut schema = self.schema();
        if let Some(k) = kind {
            schema[col].1 = k;
        }
        let rows = self
            .rows
            .iter()
            .zip(cells)
            .map(|(r, c)| {
                let mut r = r.clone();
                r[col] = c;
                r
            })
            .collect();
        Self::new(schema, rows)
    }

    /// Appends a column at the end.
    pub fn push_column(&self, name: &str, kind: ColumnKind, cells: Vec<Cell>) -> Result<Self> {
        let mut schema = self.schema();
        schema.push((name.to_string(), kind));
        let rows = self
            .rows
            .iter()
            .zip(cells)
            .map(|(r, c)| {
                let mut r = r.clone();
                r.push(c);
                r
            })
            .collect();
        Self::new(schema, rows)
    }

    /// Unwraps into schema and rows for callers that build a modified copy.
    pub fn to_parts(&self) -> (Vec<(String, ColumnKind)>, Vec<Vec<Cell>>) {
        (self.schema(), self.rows.clone())
    }
}

/// Raw, untyped table: header plus string cells, as read from CSV.
#[derive(Debug, Clone, Default)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Construction gate for ingested tables: infers column kinds, parses cells,
/// and computes the fingerprint.
pub fn validate_dataset(raw: &RawTable) -> Result<TabularDataset> {
    if raw.header.is_empty() {
        return Err(DatasetError::NoColumns);
    }
    let width = raw.header.len();
    for (r, row) in raw.rows.iter().enumerate() {
        if row.len() != width {
            return Err(DatasetError::RaggedRow { row: r, found: row.len(), expected: width });
        }
    }
    let mut schema = Vec::with_capacity(width);
    for (c, name) in raw.header.iter().enumerate() {
        let values: Vec<&str> = raw.rows.iter().map(|r| r[c].as_str()).collect();
        schema.push((name.clone(), infer_column_kind(name, &values)));
    }
    let rows = raw
        .rows
        .iter()
        .map(|row| row.iter().zip(&schema).map(|(v, (_, k))| parse_cell(v, *k)).collect())
        .collect();
    TabularDataset::new(schema, rows)
}

/// Rebuilds a dataset from raw strings using a known schema (snapshot reload).
pub fn dataset_with_schema(raw: &RawTable, kinds: &[ColumnKind]) -> Result<TabularDataset> {
    let schema: Vec<(String, ColumnKind)> = raw.header.iter().cloned().zip(kinds.iter().copied()).collect();
    if schema.len() != raw.header.len() {
        return Err(DatasetError::RaggedRow { row: 0, found: kinds.len(), expected: raw.header.len() });
    }
    let mut rows = Vec::with_capacity(raw.rows.len());
    for (r, row) in raw.rows.iter().enumerate() {
        if row.len() != schema.len() {
            return Err(DatasetError::RaggedRow { row: r, found: row.len(), expected: schema.len() });
        }
        rows.push(row.iter().zip(&schema).map(|(v, (_, k))| parse_cell(v, *k)).collect());
    }
    TabularDataset::new(schema, rows)
}

/// Parses a raw cell under a column kind. Numeric and categorical-number
/// columns store numbers; text-valued columns store text.
pub fn parse_cell(raw: &str, kind: ColumnKind) -> Cell {
    if is_missing_marker(raw) {
        return Cell::Missing;
    }
    match kind {
        ColumnKind::Numeric => parse_number(raw).map(Cell::Num).unwrap_or(Cell::Missing),
        ColumnKind::Text => Cell::Text(raw.to_string()),
        ColumnKind::Categorical | ColumnKind::Identifier => match parse_number(raw) {
            Some(v) => Cell::Num(v),
            None => Cell::Text(raw.to_string()),
        },
    }
}

/// Finite decimal numbers only; `inf`/`nan` spellings are not numbers here.
pub fn parse_number(raw: &str) -> Option<f64> {
    let t = raw.trim();
    let first = t.chars().next()?;
    if !(first.is_ascii_digit() || matches!(first, '-' | '+' | '.')) {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(header: &[&str], rows: &[&[&str]]) -> RawTable {
        RawTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
        }
    }

    #[test]
    fn numeric_table_infers_numeric_columns() {
        let d = validate_dataset(&raw(&["a", "b"], &[&["1.5", "2.25"], &["3.5", "4.75"]])).unwrap();
        assert_eq!(d.row_count(), 2);
        assert!(d.columns().iter().all(|c| c.kind == ColumnKind::Numeric));
    }

    #[test]
    fn empty_cell_becomes_missing() {
        let d = validate_dataset(&raw(&["a", "b"], &[&["1.5", ""], &["3.5", "4.75"], &["2.5", "NA"]])).unwrap();
        assert_eq!(d.column("b").unwrap().missing_count, 2);
        assert!(d.cell(0, 1).is_missing());
    }

    #[test]
    fn duplicate_column_rejected() {
        let err = validate_dataset(&raw(&["age", "age"], &[&["1", "2"]])).unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateColumn(ref n) if n == "age"));
    }

    #[test]
    fn ragged_row_reports_index() {
        let err = validate_dataset(&raw(&["a", "b"], &[&["1", "2"], &["3"]])).unwrap_err();
        assert!(matches!(err, DatasetError::RaggedRow { row: 1, .. }));
    }

    #[test]
    fn no_columns_rejected() {
        assert!(matches!(validate_dataset(&RawTable::default()), Err(DatasetError::NoColumns)));
    }

    #[test]
    fn text_in_numeric_column_rejected() {
        let err = TabularDataset::new(
            vec![("x".into(), ColumnKind::Numeric)],
            vec![vec![Cell::Text("a".into())]],
        )
        .unwrap_err();
        assert!(matches!(err, DatasetError::TextInNumericColumn { .. }));
    }

    #[test]
    fn inf_is_not_a_number() {
        assert_eq!(parse_number("inf"), None);
        assert_eq!(parse_number("1e3"), Some(1000.0));
        assert_eq!(parse_number(" -2.5 "), Some(-2.5));
    }
}
