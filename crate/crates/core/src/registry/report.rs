use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl ReportTable {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        self.rows.push(row);
    }
}

/// A finding pinned to columns and/or row indices of the input dataset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Flag {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<usize>,
    pub reason: String,
}

/// Structured result of one tool invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolReport {
    pub tool: String,
    pub status: ReportStatus,
    pub summary: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tables: Vec<ReportTable>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<Flag>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metrics: BTreeMap<String, f64>,
    pub seed: u64,
    /// Machine-readable payload (suspect lists, per-row values, ...).
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub data: Value,
}

impl ToolReport {
    pub fn ok(tool: &str, seed: u64, summary: impl Into<String>) -> Self {
        Self {
            tool: tool.to_string(),
            status: ReportStatus::Ok,
            summary: summary.into(),
            tables: Vec::new(),
            flags: Vec::new(),
            metrics: BTreeMap::new(),
            seed,
            data: Value::Null,
        }
    }

    pub fn failed(tool: &str, seed: u64, cause: impl Into<String>) -> Self {
        Self { status: ReportStatus::Failed, ..Self::ok(tool, seed, cause) }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ReportStatus::Ok
    }

    pub fn metric(mut self, name: &str, v: f64) -> Self {
        self.metrics.insert(name.to_string(), v);
        self
    }

    pub fn flagged_rows(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = self.flags.iter().flat_map(|f| f.rows.iter().copied()).collect();
        rows.sort_unstable();
        rows.dedup();
        rows
    }

    /// Checks flags against the dataset shape the tool ran on.
    pub fn well_formed(&self, columns: &[&str], row_count: usize) -> bool {
        self.flags.iter().all(|f| {
            f.columns.iter().all(|c| columns.contains(&c.as_str())) && f.rows.iter().all(|&r| r < row_count)
        })
    }
}
