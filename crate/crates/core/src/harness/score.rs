use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::corrupt::{AnswerKey, Truth};
use super::HarnessError;
use crate::dataset::{Cell, ColumnKind, TabularDataset};
use crate::state::{EventKind, StateBank};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueResolution {
    pub generator: String,
    /// Whether the session noticed the problem; `None` when no event log
    /// was consulted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detected: Option<bool>,
    pub fixed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryScore {
    pub schema_match: f64,
    pub cell_match: f64,
    pub issue_resolution: Vec<IssueResolution>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl RecoveryScore {
    pub fn all_fixed(&self) -> bool {
        self.issue_resolution.iter().all(|r| r.fixed)
    }

    pub fn fixed(&self, generator: &str) -> Option<bool> {
        self.issue_resolution.iter().find(|r| r.generator == generator).map(|r| r.fixed)
    }
}

/// Rows of `d` keyed by id; later duplicates win.
fn by_id(d: &TabularDataset, id_col: &str) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    if let Some(c) = d.column_index(id_col) {
        for r in 0..d.row_count() {
            m.insert(d.cell(r, c).render(), r);
        }
    }
    m
}

fn id_list(d: &TabularDataset, id_col: &str) -> Vec<String> {
    d.column_index(id_col).map(|c| d.column_cells(c).map(Cell::render).collect()).unwrap_or_default()
}

struct Side<'a> {
    data: &'a TabularDataset,
    rows: HashMap<String, usize>,
}

impl<'a> Side<'a> {
    fn new(data: &'a TabularDataset, id_col: &str) -> Self {
        Self { data, rows: by_id(data, id_col) }
    }

    fn cell(&self, id: &str, col: &str) -> Option<&'a Cell> {
        let r = *self.rows.get(id)?;
        let c = self.data.column_index(col)?;
        Some(self.data.cell(r, c))
    }
}

fn std_of(d: &TabularDataset, c: usize) -> f64 {
    stats::sample_std(&stats::present(&d.numeric_column(c)))
}

fn column_mean(d: &TabularDataset, col: &str) -> Option<f64> {
    let c = d.column_index(col)?;
    stats::mean(&stats::present(&d.numeric_column(c)))
}

/// Scores a curated dataset against the clean original. The clean test
/// split (for shift corruption) is recovered from the clean data by id.
pub fn recovery_score(
    clean: &TabularDataset,
    key: &AnswerKey,
    curated: &TabularDataset,
    curated_test: Option<&TabularDataset>,
) -> Result<RecoveryScore, HarnessError> {
    for col in key.task.task_columns() {
        if curated.column_index(col).is_none() {
            return Err(HarnessError::Score(format!("curated data lacks task column '{col}'")));
        }
    }
    let id_col = key.id_col.as_str();
    let orig: BTreeSet<&str> = clean.column_names().into_iter().collect();
    let now: BTreeSet<&str> = curated.column_names().into_iter().collect();
    let schema_match = orig.intersection(&now).count() as f64 / orig.union(&now).count().max(1) as f64;

    let imputed: BTreeSet<(String, String)> = key
        .entries
        .iter()
        .filter_map(|e| match &e.truth {
            Truth::Missing { cells } => Some(cells.iter().cloned()),
            _ => None,
        })
        .flatten()
        .collect();
    let train = Side::new(curated, id_col);
    let test = curated_test.map(|t| Side::new(t, id_col));
    let ids = id_list(clean, id_col);
    let (mut hits, mut total) = (0usize, 0usize);
    for (ci, meta) in clean.columns().iter().enumerate() {
        if !now.contains(meta.name.as_str()) {
            continue;
        }
        let tol = 0.5 * std_of(clean, ci);
        for (r, id) in ids.iter().enumerate() {
            let got = train.cell(id, &meta.name).or_else(|| test.as_ref().and_then(|t| t.cell(id, &meta.name)));
            let Some(got) = got else { continue };
            total += 1;
            let want = clean.cell(r, ci);
            let ok = want.identical(got)
                || (meta.kind == ColumnKind::Numeric
                    && imputed.contains(&(id.clone(), meta.name.clone()))
                    && matches!((want.as_f64(), got.as_f64()), (Some(a), Some(b)) if (a - b).abs() <= tol));
            hits += ok as usize;
        }
    }
    let cell_match = if total == 0 { 0.0 } else { hits as f64 / total as f64 };

    let mut issue_resolution = Vec::new();
    for e in &key.entries {
        let (fixed, detail) = resolved(&e.truth, clean, key, curated, curated_test);
        issue_resolution.push(IssueResolution { generator: e.generator.clone(), detected: None, fixed, detail });
    }
    let mut notes = Vec::new();
    if total == 0 {
        notes.push("no clean cells survive in the curated data".into());
    }
    Ok(RecoveryScore { schema_match, cell_match, issue_resolution, notes })
}

/// Share of `ids` whose rows are gone from `curated` or equal the clean row
/// again on every clean column.
fn restored_share(ids: &[String], clean: &TabularDataset, curated: &TabularDataset, id_col: &str) -> f64 {
    if ids.is_empty() {
        return 1.0;
    }
    let cl = Side::new(clean, id_col);
    let cu = Side::new(curated, id_col);
    let ok = ids
        .iter()
        .filter(|id| {
            !cu.rows.contains_key(id.as_str())
                || clean.columns().iter().all(|m| match (cl.cell(id, &m.name), cu.cell(id, &m.name)) {
                    (Some(a), Some(b)) => a.identical(b),
                    _ => true,
                })
        })
        .count();
    ok as f64 / ids.len() as f64
}

/// Ids that never reach the training data: held-out test rows and rows
/// removed to create imbalance.
fn withheld(key: &AnswerKey) -> BTreeSet<&str> {
    key.entries
        .iter()
        .flat_map(|e| match &e.truth {
            Truth::Shift { test_ids, .. } => test_ids.iter().map(String::as_str).collect::<Vec<_>>(),
            Truth::Imbalance { removed, .. } => removed.iter().map(String::as_str).collect(),
            _ => Vec::new(),
        })
        .collect()
}

fn retained_share(planted: &[String], clean: &TabularDataset, curated: &TabularDataset, key: &AnswerKey) -> f64 {
    let id_col = key.id_col.as_str();
    let skip = withheld(key);
    let planted: BTreeSet<&str> = planted.iter().map(String::as_str).collect();
    let present = by_id(curated, id_col);
    let others: Vec<String> =
        id_list(clean, id_col).into_iter().filter(|id| !planted.contains(id.as_str()) && !skip.contains(id.as_str())).collect();
    if others.is_empty() {
        return 1.0;
    }
    others.iter().filter(|id| present.contains_key(id.as_str())).count() as f64 / others.len() as f64
}

fn column_exact(column: &str, ids: &[String], clean: &TabularDataset, curated: &TabularDataset, id_col: &str) -> (bool, String) {
    let cl = Side::new(clean, id_col);
    let cu = Side::new(curated, id_col);
    let bad = ids
        .iter()
        .filter(|id| match (cl.cell(id, column), cu.cell(id, column)) {
            (Some(a), Some(b)) => !a.identical(b),
            (Some(_), None) => cu.rows.contains_key(id.as_str()),
            _ => false,
        })
        .count();
    (bad == 0, format!("{bad} of {} affected cells in '{column}' differ from the clean data", ids.len()))
}

fn resolved(
    truth: &Truth,
    clean: &TabularDataset,
    key: &AnswerKey,
    curated: &TabularDataset,
    curated_test: Option<&TabularDataset>,
) -> (bool, String) {
    let id_col = key.id_col.as_str();
    match truth {
        Truth::Missing { cells } => {
            let cols: BTreeSet<&str> = cells.iter().map(|(_, c)| c.as_str()).collect();
            let left: usize = cols
                .iter()
                .filter_map(|c| curated.column_index(c))
                .map(|c| curated.column_cells(c).filter(|x| x.is_missing()).count())
                .sum();
            (left == 0, format!("{left} missing cells remain in the blanked columns"))
        }
        Truth::Leak { column } | Truth::Redundant { column, .. } => {
            let gone = curated.column_index(column).is_none();
            (gone, format!("column '{column}' {}", if gone { "absent" } else { "still present" }))
        }
        Truth::Visits { .. } => {
            let ids = id_list(curated, id_col);
            let distinct: BTreeSet<&String> = ids.iter().collect();
            let ok = !ids.is_empty() && distinct.len() == ids.len();
            (ok, format!("{} rows for {} ids", ids.len(), distinct.len()))
        }
        Truth::Split { ids_per_part, .. } => {
            let present = by_id(curated, id_col);
            let missing = ids_per_part.iter().flatten().filter(|id| !present.contains_key(id.as_str())).count();
            (missing == 0, format!("{missing} ids from the source files are absent"))
        }
        Truth::Units { column, ids, .. } | Truth::Case { column, ids, .. } => column_exact(column, ids, clean, curated, id_col),
        Truth::Text { removed, .. } => {
            let ids = id_list(clean, id_col);
            let mut ok = true;
            let mut detail = Vec::new();
            for col in removed {
                let (good, d) = column_exact(col, &ids, clean, curated, id_col);
                ok &= good && curated.column_index(col).is_some();
                detail.push(d);
            }
            (ok, detail.join("; "))
        }
        Truth::Outliers { cells } => {
            let ids: Vec<String> = cells.iter().map(|(id, _)| id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
            let fixed = restored_share(&ids, clean, curated, id_col);
            let kept = retained_share(&ids, clean, curated, key);
            (fixed >= 1.0 && kept >= 0.9, format!("{:.0}% of outlier rows fixed, {:.0}% of other rows kept", fixed * 100.0, kept * 100.0))
        }
        Truth::Flips { ids } | Truth::Degraded { ids, .. } => {
            let fixed = restored_share(ids, clean, curated, id_col);
            let kept = retained_share(ids, clean, curated, key);
            (fixed >= 0.8 && kept >= 0.9, format!("{:.0}% of planted rows fixed, {:.0}% of other rows kept", fixed * 100.0, kept * 100.0))
        }
        Truth::Shift { column, test_ids, .. } => {
            // without a separate test split the held-out rows are looked up in `curated`
            let test = curated_test.unwrap_or(curated);
            let pick = |d: &TabularDataset| {
                let pos = by_id(d, id_col);
                let rows: Vec<usize> = test_ids.iter().filter_map(|id| pos.get(id).copied()).collect();
                d.select_rows(&rows).ok().and_then(|sub| column_mean(&sub, column))
            };
            let sd = clean.column_index(column).map(|c| std_of(clean, c)).unwrap_or(1.0);
            match (pick(clean), pick(test)) {
                (Some(a), Some(b)) => ((a - b).abs() <= 0.1 * sd, format!("test mean of '{column}' off by {:.3}", b - a)),
                _ => (false, format!("'{column}' unavailable for the held-out rows")),
            }
        }
        Truth::Imbalance { minority, .. } => {
            let share = |d: &TabularDataset| {
                d.column_index(&key.task.target_col)
                    .map(|c| d.column_cells(c).filter(|x| x.render() == *minority).count() as f64 / d.row_count().max(1) as f64)
                    .unwrap_or(0.0)
            };
            let (want, got) = (share(clean), share(curated));
            (got >= 0.8 * want, format!("minority share {got:.3} vs clean {want:.3}"))
        }
    }
}

/// Which planted problems the session's event log shows it noticed: a
/// report flag or question naming the affected column, or flagged rows
/// covering at least half of the planted ids.
pub fn detection(key: &AnswerKey, bank: &StateBank) -> BTreeMap<String, bool> {
    let mut columns: BTreeSet<String> = BTreeSet::new();
    let mut tools: BTreeSet<String> = BTreeSet::new();
    let mut keys: Vec<String> = Vec::new();
    let mut row_ids: BTreeSet<String> = BTreeSet::new();
    for ev in bank.events() {
        match ev.kind {
            EventKind::ToolInvoked => {
                let p = &ev.payload;
                let ok = p["report"]["status"] == "ok";
                if !ok {
                    continue;
                }
                if let Some(t) = p["tool"].as_str() {
                    tools.insert(t.to_string());
                }
                for key in ["column", "columns"] {
                    match &p["params"][key] {
                        Value::String(s) => {
                            columns.insert(s.clone());
                        }
                        Value::Array(a) => columns.extend(a.iter().filter_map(|v| v.as_str().map(str::to_string))),
                        _ => {}
                    }
                }
                let input = p["input_fingerprint"].as_str().and_then(|f| bank.dataset(f));
                for flag in p["report"]["flags"].as_array().into_iter().flatten() {
                    columns.extend(flag["columns"].as_array().into_iter().flatten().filter_map(|v| v.as_str().map(str::to_string)));
                    if let (Some(ds), Some(rows)) = (input.as_ref(), flag["rows"].as_array()) {
                        let ids = id_list(ds, &key.id_col);
                        row_ids.extend(rows.iter().filter_map(Value::as_u64).filter_map(|r| ids.get(r as usize).cloned()));
                    }
                }
            }
            EventKind::QuestionAsked => {
                let q = &ev.payload["question"];
                if let Some(k) = q["key"].as_str() {
                    keys.push(k.to_string());
                }
                columns.extend(q["options"]["proposed"].as_array().into_iter().flatten().filter_map(|v| v.as_str().map(str::to_string)));
            }
            _ => {}
        }
    }
    let rows_hit = |ids: &[String]| !ids.is_empty() && ids.iter().filter(|id| row_ids.contains(*id)).count() * 2 >= ids.len();
    key.entries
        .iter()
        .map(|e| {
            let seen = match &e.truth {
                Truth::Missing { .. } => tools.contains("impute") || tools.contains("drop_missing"),
                Truth::Leak { column } | Truth::Redundant { column, .. } | Truth::Units { column, .. } | Truth::Case { column, .. } => {
                    columns.contains(column)
                }
                Truth::Text { column, .. } => columns.contains(column) || keys.iter().any(|k| k.ends_with(&format!(":{column}"))),
                Truth::Shift { column, .. } => tools.contains("detect_shift") && columns.contains(column),
                Truth::Visits { .. } => tools.contains("aggregate_records") || keys.iter().any(|k| k.starts_with("aggregation")),
                Truth::Split { .. } => tools.contains("merge_files"),
                Truth::Imbalance { .. } => tools.contains("smote_balance"),
                Truth::Outliers { cells } => rows_hit(&cells.iter().map(|(id, _)| id.clone()).collect::<Vec<_>>()),
                Truth::Flips { ids } | Truth::Degraded { ids, .. } => rows_hit(ids),
            };
            (e.generator.clone(), seen)
        })
        .collect()
}

/// Ids of rows flagged by successful invocations of `tool`, mapped through
/// each invocation's input snapshot.
pub fn flagged_ids(bank: &StateBank, id_col: &str, tool: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for ev in bank.events().iter().filter(|e| e.kind == EventKind::ToolInvoked) {
        let p = &ev.payload;
        if p["tool"] != tool || p["report"]["status"] != "ok" {
            continue;
        }
        let Some(ds) = p["input_fingerprint"].as_str().and_then(|f| bank.dataset(f)) else { continue };
        let ids = id_list(&ds, id_col);
        for flag in p["report"]["flags"].as_array().into_iter().flatten() {
            out.extend(flag["rows"].as_array().into_iter().flatten().filter_map(Value::as_u64).filter_map(|r| ids.get(r as usize).cloned()));
        }
    }
    out
}
