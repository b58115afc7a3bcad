//! Corruption generators. Each one changes only the cells it records in
//! the answer key.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{HarnessError, ID_COL};
use crate::dataset::{Cell, ColumnKind, TabularDataset};
use crate::registry::{AuxInputs, Params, ToolRegistry};
use crate::stats;
use crate::task::{TaskKind, TaskSpec};

pub const GENERATORS: &[&str] = &[
    "inject_missing",
    "add_leak_column",
    "duplicate_visits",
    "split_files",
    "scramble_units",
    "embed_text_field",
    "add_redundant",
    "inject_outliers",
    "flip_labels",
    "degrade_quality",
    "shift_test_split",
    "imbalance",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionStep {
    pub generator: String,
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CorruptionStep {
    pub fn new(generator: &str, params: Value) -> Self {
        Self { generator: generator.to_string(), params: params.as_object().cloned().unwrap_or_default(), seed: None }
    }
}

/// Ground truth recorded by one generator. Rows are named by their id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Truth {
    Missing { cells: Vec<(String, String)> },
    Leak { column: String },
    Visits { id_col: String, visit_col: String, visits: usize, ids: usize },
    Split { parts: usize, ids_per_part: Vec<Vec<String>> },
    Units { column: String, factor: f64, ids: Vec<String> },
    Case { column: String, ids: Vec<String>, mapping: BTreeMap<String, String> },
    Text { column: String, removed: Vec<String>, phrases: BTreeMap<String, String> },
    Redundant { column: String, source: String },
    Outliers { cells: Vec<(String, String)> },
    Flips { ids: Vec<String> },
    Degraded { ids: Vec<String>, columns: Vec<String> },
    Shift { column: String, delta: f64, test_ids: Vec<String> },
    Imbalance { minority: String, removed: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyEntry {
    pub generator: String,
    pub params: Map<String, Value>,
    pub seed: u64,
    pub truth: Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerKey {
    pub task: TaskSpec,
    pub id_col: String,
    pub entries: Vec<KeyEntry>,
}

impl AnswerKey {
    pub fn truth(&self, generator: &str) -> Option<&Truth> {
        self.entries.iter().find(|e| e.generator == generator).map(|e| &e.truth)
    }
}

/// A corrupted dataset plus everything needed to score curation of it.
#[derive(Debug, Clone)]
pub struct Corrupted {
    pub train: TabularDataset,
    pub extra_files: Vec<TabularDataset>,
    pub test: Option<TabularDataset>,
    pub task: TaskSpec,
    pub key: AnswerKey,
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn step_seed(base: u64, i: usize) -> u64 {
    base ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

struct Ctx<'a> {
    name: &'a str,
    params: &'a Map<String, Value>,
    rng: ChaCha8Rng,
}

impl Ctx<'_> {
    fn err(&self, reason: impl Into<String>) -> HarnessError {
        HarnessError::Generator { generator: self.name.to_string(), reason: reason.into() }
    }

    fn f64(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).and_then(Value::as_f64).unwrap_or(default)
    }

    fn usize(&self, key: &str, default: usize) -> usize {
        self.params.get(key).and_then(Value::as_u64).map(|v| v as usize).unwrap_or(default)
    }

    fn str(&self, key: &str) -> Option<String> {
        self.params.get(key).and_then(Value::as_str).map(str::to_string)
    }

    fn columns(&self, key: &str) -> Option<Vec<String>> {
        self.params.get(key).and_then(Value::as_array).map(|a| a.iter().filter_map(|v| v.as_str().map(str::to_string)).collect())
    }
}

fn ids(d: &TabularDataset) -> Result<Vec<String>, String> {
    let c = d.column_index(ID_COL).ok_or("dataset has no id column")?;
    Ok(d.column_cells(c).map(Cell::render).collect())
}

fn feature_names(d: &TabularDataset, task: &TaskSpec, kind: ColumnKind) -> Vec<String> {
    d.columns()
        .iter()
        .filter(|c| c.kind == kind && c.name != ID_COL && !task.is_task_column(&c.name))
        .map(|c| c.name.clone())
        .collect()
}

fn column_std(d: &TabularDataset, c: usize) -> f64 {
    let v = stats::present(&d.numeric_column(c));
    let s = stats::sample_std(&v);
    if s.is_finite() && s > 0.0 { s } else { 1.0 }
}

fn set_cells(d: &TabularDataset, c: usize, mut f: impl FnMut(usize, &Cell) -> Cell) -> Result<TabularDataset, String> {
    let cells: Vec<Cell> = d.column_cells(c).enumerate().map(|(r, x)| f(r, x)).collect();
    d.with_column(c, cells, None).map_err(|e| e.to_string())
}

fn choose(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut v = sample(rng, n, k.min(n)).into_vec();
    v.sort_unstable();
    v
}

/// Applies `steps` in order. An empty spec returns the clean data unchanged.
pub fn corrupt(clean: &TabularDataset, task: &TaskSpec, steps: &[CorruptionStep], seed: u64) -> Result<Corrupted, HarnessError> {
    let mut st = Corrupted {
        train: clean.clone(),
        extra_files: Vec::new(),
        test: None,
        task: task.clone(),
        key: AnswerKey { task: task.clone(), id_col: ID_COL.to_string(), entries: Vec::new() },
    };
    for (i, step) in steps.iter().enumerate() {
        let s = step.seed.unwrap_or_else(|| step_seed(seed, i));
        let mut ctx = Ctx { name: &step.generator, params: &step.params, rng: ChaCha8Rng::seed_from_u64(s) };
        let truth = apply(&mut st, &mut ctx)?;
        st.key.entries.push(KeyEntry { generator: step.generator.clone(), params: step.params.clone(), seed: s, truth });
    }
    Ok(st)
}

fn apply(st: &mut Corrupted, g: &mut Ctx<'_>) -> Result<Truth, HarnessError> {
    let task = st.task.clone();
    let owned = st.train.clone();
    let d = &owned;
    let id_list = ids(d).map_err(|e| g.err(e))?;
    let numeric = feature_names(d, &task, ColumnKind::Numeric);
    let e = |r: String| HarnessError::Generator { generator: g.name.to_string(), reason: r };
    match g.name {
        "inject_missing" => {
            let rate = g.f64("rate", 0.1);
            let cols = g.columns("columns").unwrap_or_else(|| {
                d.columns().iter().filter(|c| c.name != ID_COL && !task.is_task_column(&c.name)).map(|c| c.name.clone()).collect()
            });
            let mut out = d.clone();
            let mut cells = Vec::new();
            for name in &cols {
                let c = out.column_index(name).ok_or_else(|| g.err(format!("column '{name}' not found")))?;
                let mut blank = Vec::new();
                for r in 0..out.row_count() {
                    if g.rng.random::<f64>() < rate {
                        blank.push(r);
                    }
                }
                let set: BTreeSet<usize> = blank.iter().copied().collect();
                out = set_cells(&out, c, |r, x| if set.contains(&r) { Cell::Missing } else { x.clone() }).map_err(e)?;
                cells.extend(blank.into_iter().map(|r| (id_list[r].clone(), name.clone())));
            }
            st.train = out;
            Ok(Truth::Missing { cells })
        }
        "add_leak_column" => {
            let noise = g.f64("noise", 0.1);
            let (source, default_name) = match task.task_kind {
                TaskKind::Survival => (task.target_col.clone(), format!("{}_followup", task.target_col)),
                _ => (task.target_col.clone(), format!("{}_followup", task.target_col)),
            };
            let name = g.str("name").unwrap_or(default_name);
            let c = d.column_index(&source).ok_or_else(|| g.err("task column missing"))?;
            let y = d.numeric_column(c);
            if y.iter().any(Option::is_none) {
                return Err(g.err("leak source must be numeric and complete"));
            }
            let sd = column_std(d, c);
            let cells: Vec<Cell> = y.iter().map(|v| Cell::Num(stats::round_to(v.unwrap() + noise * sd * gauss(&mut g.rng), 3))).collect();
            st.train = d.push_column(&name, ColumnKind::Numeric, cells).map_err(|x| g.err(x.to_string()))?;
            Ok(Truth::Leak { column: name })
        }
        "duplicate_visits" => {
            let visits = g.usize("visits", 3).max(2);
            let jitter = g.f64("jitter", 0.1);
            let visit_col = g.str("visit_col").unwrap_or_else(|| "visit".into());
            let stds: Vec<(usize, f64)> = numeric.iter().map(|n| d.column_index(n).unwrap()).map(|c| (c, column_std(d, c))).collect();
            let mut schema = d.schema();
            schema.push((visit_col.clone(), ColumnKind::Numeric));
            let mut rows = Vec::with_capacity(d.row_count() * visits);
            for row in d.rows() {
                for v in 1..=visits {
                    let mut r = row.clone();
                    if v < visits {
                        for &(c, sd) in &stds {
                            if let Cell::Num(x) = r[c] {
                                r[c] = Cell::Num(stats::round_to(x + jitter * sd * gauss(&mut g.rng), 3));
                            }
                        }
                    }
                    r.push(Cell::Num(v as f64));
                    rows.push(r);
                }
            }
            st.train = TabularDataset::new(schema, rows).map_err(|x| g.err(x.to_string()))?;
            Ok(Truth::Visits { id_col: ID_COL.into(), visit_col, visits, ids: d.row_count() })
        }
        "split_files" => {
            let parts = g.usize("parts", 2).max(2);
            let n = d.row_count();
            if n < parts {
                return Err(g.err("fewer rows than parts"));
            }
            let mut chunks = Vec::new();
            let mut id_parts = Vec::new();
            for p in 0..parts {
                let idx: Vec<usize> = (p * n / parts..(p + 1) * n / parts).collect();
                id_parts.push(idx.iter().map(|&r| id_list[r].clone()).collect());
                chunks.push(d.select_rows(&idx).map_err(|x| g.err(x.to_string()))?);
            }
            st.train = chunks.remove(0);
            st.extra_files.extend(chunks);
            Ok(Truth::Split { parts, ids_per_part: id_parts })
        }
        "scramble_units" => {
            let fraction = g.f64("fraction", 0.3);
            if g.str("mode").as_deref() == Some("case") {
                let text = feature_names(d, &task, ColumnKind::Categorical)
                    .into_iter()
                    .filter(|n| d.column_index(n).is_some_and(|c| d.column_cells(c).any(|x| matches!(x, Cell::Text(_)))))
                    .collect::<Vec<_>>();
                let column = g.str("column").or_else(|| text.first().cloned()).ok_or_else(|| g.err("no text column to scramble"))?;
                let c = d.column_index(&column).ok_or_else(|| g.err(format!("column '{column}' not found")))?;
                let mut changed = Vec::new();
                let mut mapping = BTreeMap::new();
                let cells: Vec<Cell> = d
                    .column_cells(c)
                    .enumerate()
                    .map(|(r, x)| match x {
                        Cell::Text(s) if g.rng.random::<f64>() < fraction => {
                            let v = if r % 2 == 0 { s.to_uppercase() } else { s.to_lowercase() };
                            if &v == s {
                                return x.clone();
                            }
                            changed.push(id_list[r].clone());
                            mapping.insert(v.clone(), s.clone());
                            Cell::Text(v)
                        }
                        _ => x.clone(),
                    })
                    .collect();
                st.train = d.with_column(c, cells, None).map_err(|x| g.err(x.to_string()))?;
                return Ok(Truth::Case { column, ids: changed, mapping });
            }
            let factor = g.f64("factor", 10.0);
            if factor == 0.0 {
                return Err(g.err("factor must be non-zero"));
            }
            let column = g.str("column").or_else(|| numeric.first().cloned()).ok_or_else(|| g.err("no numeric column"))?;
            let c = d.column_index(&column).ok_or_else(|| g.err(format!("column '{column}' not found")))?;
            let mut changed = Vec::new();
            let mut chosen = BTreeSet::new();
            for (r, id) in id_list.iter().enumerate().take(d.row_count()) {
                if g.rng.random::<f64>() < fraction && !d.cell(r, c).is_missing() {
                    chosen.insert(r);
                    changed.push(id.clone());
                }
            }
            st.train = set_cells(d, c, |r, x| match x {
                Cell::Num(v) if chosen.contains(&r) => Cell::Num(v * factor),
                _ => x.clone(),
            })
            .map_err(e)?;
            Ok(Truth::Units { column, factor, ids: changed })
        }
        "embed_text_field" => {
            let binary: Vec<String> = feature_names(d, &task, ColumnKind::Categorical)
                .into_iter()
                .filter(|n| {
                    let c = d.column_index(n).unwrap();
                    d.column_cells(c).all(|x| matches!(x.as_f64(), Some(v) if v == 0.0 || v == 1.0))
                })
                .collect();
            let removed = g.columns("columns").unwrap_or(binary);
            if removed.is_empty() {
                return Err(g.err("no binary columns to embed"));
            }
            let column = g.str("column").unwrap_or_else(|| "notes".into());
            let idx: Vec<usize> = removed.iter().map(|n| d.column_index(n).ok_or_else(|| g.err(format!("column '{n}' not found")))).collect::<Result<_, _>>()?;
            let phrases: BTreeMap<String, String> = removed.iter().map(|n| (n.clone(), format!("{n} present"))).collect();
            let cells: Vec<Cell> = (0..d.row_count())
                .map(|r| {
                    let parts: Vec<String> = removed
                        .iter()
                        .zip(&idx)
                        .map(|(n, &c)| if d.cell(r, c).as_f64() == Some(1.0) { format!("{n} present") } else { format!("{n} absent") })
                        .collect();
                    Cell::Text(format!("Note: {}", parts.join("; ")))
                })
                .collect();
            let with = d.push_column(&column, ColumnKind::Text, cells).map_err(|x| g.err(x.to_string()))?;
            st.train = with.drop_columns(&removed).map_err(|x| g.err(x.to_string()))?;
            Ok(Truth::Text { column, removed, phrases })
        }
        "add_redundant" => {
            let source = g.str("source").or_else(|| numeric.first().cloned()).ok_or_else(|| g.err("no numeric column"))?;
            let noise = g.f64("noise", 0.01);
            let name = g.str("name").unwrap_or_else(|| format!("{source}_copy"));
            let c = d.column_index(&source).ok_or_else(|| g.err(format!("column '{source}' not found")))?;
            let sd = column_std(d, c);
            let cells: Vec<Cell> = d
                .column_cells(c)
                .map(|x| match x.as_f64() {
                    Some(v) => Cell::Num(stats::round_to(v + noise * sd * gauss(&mut g.rng), 3)),
                    None => Cell::Missing,
                })
                .collect();
            st.train = d.push_column(&name, ColumnKind::Numeric, cells).map_err(|x| g.err(x.to_string()))?;
            Ok(Truth::Redundant { column: name, source })
        }
        "inject_outliers" => {
            let count = g.usize("count", 5);
            let magnitude = g.f64("magnitude", 8.0);
            let cols = g.columns("columns").unwrap_or_else(|| numeric.clone());
            if cols.is_empty() {
                return Err(g.err("no numeric columns"));
            }
            let rows = choose(&mut g.rng, d.row_count(), count);
            let mut out = d.clone();
            let mut cells = Vec::new();
            for r in rows {
                let name = &cols[g.rng.random_range(0..cols.len())];
                let c = out.column_index(name).ok_or_else(|| g.err(format!("column '{name}' not found")))?;
                let v = stats::present(&out.numeric_column(c));
                let (m, sd) = (stats::mean(&v).unwrap_or(0.0), column_std(&out, c));
                let sign = if g.rng.random::<bool>() { 1.0 } else { -1.0 };
                let value = stats::round_to(m + sign * magnitude * sd, 3);
                out = set_cells(&out, c, |i, x| if i == r { Cell::Num(value) } else { x.clone() }).map_err(e)?;
                cells.push((id_list[r].clone(), name.clone()));
            }
            st.train = out;
            Ok(Truth::Outliers { cells })
        }
        "flip_labels" => {
            if task.task_kind != TaskKind::Classification {
                return Err(g.err("label flips need a classification task"));
            }
            let c = d.column_index(&task.target_col).ok_or_else(|| g.err("target missing"))?;
            let classes: BTreeSet<String> = d.column_cells(c).filter(|x| !x.is_missing()).map(Cell::render).collect();
            if classes.len() != 2 {
                return Err(g.err("label flips need a binary target"));
            }
            let classes: Vec<String> = classes.into_iter().collect();
            let count = (g.f64("rate", 0.05) * d.row_count() as f64).round() as usize;
            let rows: BTreeSet<usize> = choose(&mut g.rng, d.row_count(), count).into_iter().collect();
            let numeric_target = d.columns()[c].kind != ColumnKind::Text;
            st.train = set_cells(d, c, |r, x| {
                if !rows.contains(&r) || x.is_missing() {
                    return x.clone();
                }
                let other = if x.render() == classes[0] { &classes[1] } else { &classes[0] };
                match (numeric_target, crate::dataset::parse_number(other)) {
                    (true, Some(v)) => Cell::Num(v),
                    _ => Cell::Text(other.clone()),
                }
            })
            .map_err(e)?;
            Ok(Truth::Flips { ids: rows.iter().map(|&r| id_list[r].clone()).collect() })
        }
        "degrade_quality" => {
            let fraction = g.f64("fraction", 0.1);
            let noise = g.f64("noise", 4.0);
            let cols = g.columns("columns").unwrap_or_else(|| numeric.clone());
            let rows: BTreeSet<usize> = choose(&mut g.rng, d.row_count(), (fraction * d.row_count() as f64).round() as usize).into_iter().collect();
            let mut out = d.clone();
            for name in &cols {
                let c = out.column_index(name).ok_or_else(|| g.err(format!("column '{name}' not found")))?;
                let sd = column_std(&out, c);
                let shifts: BTreeMap<usize, f64> = rows.iter().map(|&r| (r, noise * sd * gauss(&mut g.rng))).collect();
                out = set_cells(&out, c, |r, x| match (x, shifts.get(&r)) {
                    (Cell::Num(v), Some(s)) => Cell::Num(stats::round_to(v + s, 3)),
                    _ => x.clone(),
                })
                .map_err(e)?;
            }
            st.train = out;
            Ok(Truth::Degraded { ids: rows.iter().map(|&r| id_list[r].clone()).collect(), columns: cols })
        }
        "shift_test_split" => {
            let fraction = g.f64("fraction", 0.3);
            let column = g.str("column").or_else(|| numeric.first().cloned()).ok_or_else(|| g.err("no numeric column"))?;
            let c = d.column_index(&column).ok_or_else(|| g.err(format!("column '{column}' not found")))?;
            let delta = stats::round_to(g.f64("shift", 1.5) * column_std(d, c), 3);
            let n = d.row_count();
            let test_rows = choose(&mut g.rng, n, (fraction * n as f64).round() as usize);
            let set: BTreeSet<usize> = test_rows.iter().copied().collect();
            let train_rows: Vec<usize> = (0..n).filter(|r| !set.contains(r)).collect();
            let test = d.select_rows(&test_rows).map_err(|x| g.err(x.to_string()))?;
            let test = set_cells(&test, c, |_, x| match x {
                Cell::Num(v) => Cell::Num(stats::round_to(v + delta, 3)),
                _ => x.clone(),
            })
            .map_err(e)?;
            st.train = d.select_rows(&train_rows).map_err(|x| g.err(x.to_string()))?;
            st.test = Some(test);
            Ok(Truth::Shift { column, delta, test_ids: test_rows.iter().map(|&r| id_list[r].clone()).collect() })
        }
        "imbalance" => {
            if task.task_kind != TaskKind::Classification {
                return Err(g.err("imbalance needs a classification task"));
            }
            let c = d.column_index(&task.target_col).ok_or_else(|| g.err("target missing"))?;
            let minority = g.str("minority").unwrap_or_else(|| "1".into());
            let share = g.f64("fraction", 0.1);
            if !(0.0..0.5).contains(&share) {
                return Err(g.err("fraction must be in [0, 0.5)"));
            }
            let min_rows: Vec<usize> = (0..d.row_count()).filter(|&r| d.cell(r, c).render() == minority).collect();
            let majority = d.row_count() - min_rows.len();
            let keep = ((share * majority as f64) / (1.0 - share)).round() as usize;
            if keep >= min_rows.len() {
                return Err(g.err("minority class is already rare enough"));
            }
            let kept: BTreeSet<usize> = choose(&mut g.rng, min_rows.len(), keep).into_iter().map(|i| min_rows[i]).collect();
            let removed: Vec<usize> = min_rows.iter().copied().filter(|r| !kept.contains(r)).collect();
            let drop: BTreeSet<usize> = removed.iter().copied().collect();
            st.train = d.filter_rows(|r, _| !drop.contains(&r)).map_err(|x| g.err(x.to_string()))?;
            Ok(Truth::Imbalance { minority, removed: removed.iter().map(|&r| id_list[r].clone()).collect() })
        }
        other => Err(HarnessError::Spec(format!("unknown generator '{other}'"))),
    }
}

fn rows_of(d: &TabularDataset, id_set: &BTreeSet<&str>) -> Vec<usize> {
    match d.column_index(ID_COL) {
        Some(c) => (0..d.row_count()).filter(|&r| id_set.contains(d.cell(r, c).render().as_str())).collect(),
        None => Vec::new(),
    }
}

/// The ideal inverse of one generator: tool invocations (name, params,
/// on_test) to run in order. `"$flagged"` stands for the rows flagged by
/// the preceding call.
pub fn oracle_curation(entry: &KeyEntry, dataset: &TabularDataset) -> Vec<(String, Params, bool)> {
    let p = |v: Value| -> Params { v.as_object().cloned().unwrap_or_default().into_iter().collect() };
    let on_train = |tool: &str, v: Value| (tool.to_string(), p(v), false);
    match &entry.truth {
        Truth::Missing { .. } => vec![on_train("impute", json!({ "strategy": "mean" }))],
        Truth::Leak { column } => vec![on_train("drop_columns", json!({ "columns": [column], "reason": "leak" }))],
        Truth::Visits { id_col, visit_col, .. } => vec![
            on_train("aggregate_records", json!({ "id_col": id_col, "policy": "last", "time_col": visit_col })),
            on_train("drop_columns", json!({ "columns": [visit_col], "reason": "visit index" })),
        ],
        Truth::Split { .. } => vec![on_train("merge_files", json!({}))],
        Truth::Units { column, factor, ids } => {
            let set: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
            vec![on_train(
                "harmonize_values",
                json!({ "column": column, "scale": 1.0 / factor, "rows": rows_of(dataset, &set), "round_digits": 3 }),
            )]
        }
        Truth::Case { column, mapping, .. } => {
            let mut full = mapping.clone();
            for v in mapping.values() {
                full.insert(v.clone(), v.clone());
            }
            vec![on_train("harmonize_values", json!({ "column": column, "mapping": full }))]
        }
        Truth::Text { column, phrases, .. } => vec![
            on_train("extract_text_features", json!({ "column": column, "patterns": phrases.iter().map(|(k, v)| (k.clone(), format!(r"\b{}\b", regex::escape(v)))).collect::<BTreeMap<_, _>>() })),
            on_train("drop_columns", json!({ "columns": [column], "reason": "features extracted" })),
        ],
        Truth::Redundant { .. } => vec![on_train("prune_redundant", json!({}))],
        Truth::Outliers { .. } => vec![on_train("detect_outliers", json!({ "k": 3.0 })), on_train("drop_rows", json!({ "rows": "$flagged" }))],
        Truth::Flips { .. } => vec![on_train("flag_noisy_labels", json!({})), on_train("drop_rows", json!({ "rows": "$flagged" }))],
        Truth::Degraded { .. } => vec![on_train("detect_outliers", json!({ "k": 1.5 })), on_train("drop_rows", json!({ "rows": "$flagged" }))],
        Truth::Shift { column, delta, .. } => {
            vec![("harmonize_values".to_string(), p(json!({ "column": column, "offset": -delta, "round_digits": 3 })), true)]
        }
        Truth::Imbalance { .. } => vec![on_train("smote_balance", json!({}))],
    }
}

/// Runs the oracle curation for every key entry, in reverse corruption
/// order, and returns the curated train and test splits.
pub fn apply_oracle(
    registry: &ToolRegistry,
    corrupted: &Corrupted,
    seed: u64,
) -> Result<(TabularDataset, Option<TabularDataset>), HarnessError> {
    let mut train = corrupted.train.clone();
    let mut test = corrupted.test.clone();
    let aux = AuxInputs { datasets: corrupted.extra_files.clone(), ..AuxInputs::default() };
    for entry in corrupted.key.entries.iter().rev() {
        let mut flagged: Vec<usize> = Vec::new();
        for (tool, mut params, on_test) in oracle_curation(entry, &train) {
            if params.get("rows").and_then(Value::as_str) == Some("$flagged") {
                if flagged.is_empty() {
                    continue;
                }
                params.insert("rows".into(), json!(flagged));
            }
            let target = if on_test {
                match test.as_ref() {
                    Some(t) => t,
                    None => continue,
                }
            } else {
                &train
            };
            let inv = registry
                .invoke(&tool, target, &corrupted.task, &params, seed, &aux)
                .map_err(|x| HarnessError::Generator { generator: entry.generator.clone(), reason: x.to_string() })?;
            if !inv.report.is_ok() {
                return Err(HarnessError::Generator { generator: entry.generator.clone(), reason: format!("oracle {tool}: {}", inv.report.summary) });
            }
            flagged = inv.report.data.get("rows").and_then(Value::as_array).map(|a| a.iter().filter_map(Value::as_u64).map(|v| v as usize).collect()).unwrap_or_default();
            if on_test {
                test = Some(inv.dataset);
            } else {
                train = inv.dataset;
            }
        }
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{gen_clean, CleanSpec};

    fn base() -> (TabularDataset, TaskSpec) {
        gen_clean(&CleanSpec { categorical: 2, ..CleanSpec::new(TaskKind::Classification, 100) }, 5).unwrap()
    }

    #[test]
    fn empty_spec_is_identity() {
        let (d, t) = base();
        let c = corrupt(&d, &t, &[], 1).unwrap();
        assert_eq!(c.train.fingerprint(), d.fingerprint());
        assert!(c.key.entries.is_empty());
    }

    #[test]
    fn missing_count_matches_key() {
        let (d, t) = base();
        let c = corrupt(&d, &t, &[CorruptionStep::new("inject_missing", json!({ "rate": 0.2 }))], 1).unwrap();
        let Truth::Missing { cells } = &c.key.entries[0].truth else { panic!() };
        assert_eq!(cells.len(), c.train.total_missing());
        // 100 rows x 7 feature columns at rate 0.2
        assert!((cells.len() as f64 - 140.0).abs() < 45.0, "{}", cells.len());
    }

    #[test]
    fn leak_needs_a_target() {
        let (d, t) = base();
        let no_target = d.drop_columns(std::slice::from_ref(&t.target_col)).unwrap();
        assert!(corrupt(&no_target, &t, &[CorruptionStep::new("add_leak_column", json!({}))], 1).is_err());
    }

    #[test]
    fn untouched_cells_identical() {
        let (d, t) = base();
        let c = corrupt(&d, &t, &[CorruptionStep::new("inject_outliers", json!({ "count": 4 }))], 3).unwrap();
        let Truth::Outliers { cells } = &c.key.entries[0].truth else { panic!() };
        let touched: BTreeSet<(String, String)> = cells.iter().cloned().collect();
        let ids = ids(&d).unwrap();
        for (r, id) in ids.iter().enumerate() {
            for (ci, col) in d.columns().iter().enumerate() {
                if !touched.contains(&(id.clone(), col.name.clone())) {
                    assert!(d.cell(r, ci).identical(c.train.cell(r, ci)));
                }
            }
        }
    }
}
