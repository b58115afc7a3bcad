//! Label-leakage suspects from outcome correlation and column names.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::{Cell, ColumnKind, TabularDataset};
use crate::stats;
use crate::task::TaskSpec;

pub const DEFAULT_THRESHOLD: f64 = 0.95;

/// Name tokens that suggest a value recorded at or after the outcome.
pub const POST_OUTCOME_TOKENS: &[&str] = &["status", "alive", "event", "outcome", "death", "deceased", "died"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageEvidence {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name_pattern: Option<String>,
    pub post_outcome: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageSuspect {
    pub column: String,
    pub evidence: LeakageEvidence,
    pub recommended_action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confirmed: Option<bool>,
}

/// Numeric view of a column: numbers as-is, two-level text as 0/1.
pub fn numeric_view(dataset: &TabularDataset, col: usize) -> Option<Vec<Option<f64>>> {
    match dataset.columns()[col].kind {
        ColumnKind::Numeric => Some(dataset.numeric_column(col)),
        ColumnKind::Categorical => {
            if dataset.column_cells(col).all(|c| !matches!(c, Cell::Text(_))) {
                return Some(dataset.numeric_column(col));
            }
            let levels: BTreeSet<String> =
                dataset.column_cells(col).filter(|c| !c.is_missing()).map(Cell::render).collect();
            if levels.len() != 2 {
                return None;
            }
            let hi = levels.iter().next_back().cloned();
            Some(
                dataset
                    .column_cells(col)
                    .map(|c| if c.is_missing() { None } else { Some(if Some(c.render()) == hi { 1.0 } else { 0.0 }) })
                    .collect(),
            )
        }
        _ => None,
    }
}

fn tokens(name: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut prev_lower = false;
    for ch in name.chars() {
        if !ch.is_alphanumeric() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            prev_lower = false;
            continue;
        }
        if ch.is_uppercase() && prev_lower && !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        prev_lower = ch.is_lowercase();
        cur.extend(ch.to_lowercase());
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Name-based evidence: a `time_to_` prefix, the target's name inside the
/// column name, or a post-outcome token.
pub fn name_evidence(column: &str, target: &str) -> (Option<String>, bool) {
    let lower = column.to_lowercase();
    let stem = target.to_lowercase();
    let toks = tokens(column);
    let post = toks.iter().any(|t| POST_OUTCOME_TOKENS.contains(&t.as_str()));
    if lower.starts_with("time_to_") {
        return (Some("time_to_*".into()), true);
    }
    if stem.len() >= 3 && lower.contains(&stem) {
        return (Some(format!("*{stem}*")), post);
    }
    if post {
        let t = toks.iter().find(|t| POST_OUTCOME_TOKENS.contains(&t.as_str())).cloned().unwrap_or_default();
        return (Some(format!("*{t}*")), true);
    }
    (None, false)
}

pub fn detect_label_leakage(dataset: &TabularDataset, task: &TaskSpec, threshold: f64) -> Result<Vec<LeakageSuspect>, String> {
    let tc = dataset.column_index(&task.target_col).ok_or_else(|| format!("target column '{}' not found", task.target_col))?;
    let mut outcomes = Vec::new();
    outcomes.extend(numeric_view(dataset, tc));
    if let Some(t) = task.time_col.as_deref().and_then(|t| dataset.column_index(t)) {
        outcomes.extend(numeric_view(dataset, t));
    }
    let mut suspects = Vec::new();
    for (c, meta) in dataset.columns().iter().enumerate() {
        if task.is_task_column(&meta.name) || meta.kind == ColumnKind::Identifier {
            continue;
        }
        let correlation = numeric_view(dataset, c).and_then(|x| {
            outcomes
                .iter()
                .filter_map(|y| stats::pearson(&x, y))
                .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        });
        let (name_pattern, post_outcome) = name_evidence(&meta.name, &task.target_col);
        let strong = correlation.is_some_and(|r| r.abs() >= threshold);
        if strong || name_pattern.is_some() {
            suspects.push(LeakageSuspect {
                column: meta.name.clone(),
                evidence: LeakageEvidence { correlation: correlation.map(|r| stats::round_to(r, 6)), name_pattern, post_outcome },
                recommended_action: "ask_expert".into(),
                confirmed: None,
            });
        }
    }
    Ok(suspects)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn name_patterns() {
        assert_eq!(name_evidence("time_to_lung_cancer", "lung_cancer").0.as_deref(), Some("time_to_*"));
        assert!(name_evidence("Alive_status", "death").1);
        assert!(name_evidence("Event_Category", "y").1);
        assert!(name_evidence("eventCount", "y").1);
        assert_eq!(name_evidence("age", "lung_cancer"), (None, false));
        assert_eq!(name_evidence("preventive", "y"), (None, false));
    }
}
