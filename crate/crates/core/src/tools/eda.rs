//! Exploratory summary: shape, per-column statistics, missingness,
//! correlations, duplicates and IQR outliers.

use std::collections::{BTreeMap, HashSet};

use serde_json::{json, Value};

use super::outliers::iqr_bounds;
use crate::dataset::{Cell, ColumnKind, TabularDataset};
use crate::registry::{ReportTable, ToolReport};
use crate::stats;

fn num(v: f64) -> Value {
    json!(stats::round_to(v, 6))
}

/// Count of rows identical to an earlier row.
pub fn duplicate_row_count(dataset: &TabularDataset) -> usize {
    let mut seen = HashSet::new();
    dataset
        .rows()
        .iter()
        .filter(|r| !seen.insert(r.iter().map(Cell::render).collect::<Vec<_>>()))
        .count()
}

/// Most frequent values, ties broken by rendered value.
pub fn top_values(dataset: &TabularDataset, col: usize, k: usize) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for c in dataset.column_cells(col).filter(|c| !c.is_missing()) {
        *counts.entry(c.render()).or_default() += 1;
    }
    let mut v: Vec<(String, usize)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v.truncate(k);
    v
}

pub fn eda_summary(dataset: &TabularDataset, seed: u64) -> ToolReport {
    let n = dataset.row_count();
    let mut shape = ReportTable::new("shape", &["rows", "columns"]);
    shape.push(vec![json!(n), json!(dataset.column_count())]);

    let mut numeric_stats =
        ReportTable::new("numeric_stats", &["column", "mean", "std", "min", "q1", "median", "q3", "max"]);
    let mut top = ReportTable::new("top_values", &["column", "value", "count"]);
    let mut missing = ReportTable::new("missing", &["column", "missing", "fraction"]);
    let mut outliers = ReportTable::new("iqr_outliers", &["column", "lower", "upper", "count"]);
    let mut reclass = Vec::new();
    let mut kinds = BTreeMap::new();

    for (c, meta) in dataset.columns().iter().enumerate() {
        kinds.insert(meta.name.clone(), json!(meta.kind.tag()));
        missing.push(vec![
            json!(meta.name),
            json!(meta.missing_count),
            num(if n == 0 { 0.0 } else { meta.missing_count as f64 / n as f64 }),
        ]);
        match meta.kind {
            ColumnKind::Numeric => {
                let sorted = stats::sorted_copy(&stats::present(&dataset.numeric_column(c)));
                if sorted.is_empty() {
                    continue;
                }
                let q = |p| stats::quantile_sorted(&sorted, p).unwrap_or(0.0);
                numeric_stats.push(vec![
                    json!(meta.name),
                    num(stats::mean(&sorted).unwrap_or(0.0)),
                    num(stats::sample_std(&sorted)),
                    num(sorted[0]),
                    num(q(0.25)),
                    num(q(0.5)),
                    num(q(0.75)),
                    num(sorted[sorted.len() - 1]),
                ]);
                let (lo, hi) = iqr_bounds(&sorted, 1.5);
                let count = sorted.iter().filter(|&&v| v < lo || v > hi).count();
                outliers.push(vec![json!(meta.name), num(lo), num(hi), json!(count)]);
            }
            ColumnKind::Categorical | ColumnKind::Text => {
                for (value, count) in top_values(dataset, c, 5) {
                    top.push(vec![json!(meta.name), json!(value), json!(count)]);
                }
                if meta.kind == ColumnKind::Categorical && dataset.column_cells(c).all(|x| !matches!(x, Cell::Text(_))) {
                    reclass.push(meta.name.clone());
                }
            }
            ColumnKind::Identifier => {}
        }
    }

    let numeric: Vec<usize> =
        (0..dataset.column_count()).filter(|&c| dataset.columns()[c].kind == ColumnKind::Numeric).collect();
    let mut corr = ReportTable::new("correlations", &["a", "b", "pearson"]);
    for (i, &a) in numeric.iter().enumerate() {
        for &b in &numeric[i + 1..] {
            if let Some(r) = stats::pearson(&dataset.numeric_column(a), &dataset.numeric_column(b)) {
                corr.push(vec![
                    json!(dataset.columns()[a].name),
                    json!(dataset.columns()[b].name),
                    num(r),
                ]);
            }
        }
    }

    let dups = duplicate_row_count(dataset);
    let missing_cells = dataset.total_missing();
    let rows_with_missing = (0..n).filter(|&r| dataset.row_has_missing(r)).count();
    let mut report = ToolReport::ok(
        "eda_summary",
        seed,
        format!(
            "{n} rows x {} columns; {missing_cells} missing cells in {rows_with_missing} rows; {dups} duplicate rows; {} integer-coded columns treated as categorical",
            dataset.column_count(),
            reclass.len()
        ),
    )
    .metric("rows", n as f64)
    .metric("columns", dataset.column_count() as f64)
    .metric("missing_cells", missing_cells as f64)
    .metric("rows_with_missing", rows_with_missing as f64)
    .metric("duplicate_rows", dups as f64);
    report.tables = vec![shape, numeric_stats, top, missing, corr, outliers];
    report.data = json!({ "kinds": kinds, "categorical_reclassified": reclass });
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::read_csv_str;

    #[test]
    fn constant_column_has_zero_std_and_no_outliers() {
        let d = read_csv_str("x,y\n1.5,1\n1.5,2\n1.5,3\n1.5,4\n").unwrap();
        let r = eda_summary(&d, 0);
        let stats = r.tables.iter().find(|t| t.name == "numeric_stats").unwrap();
        assert_eq!(stats.rows[0][2], json!(0.0));
        let out = r.tables.iter().find(|t| t.name == "iqr_outliers").unwrap();
        assert_eq!(out.rows[0][3], json!(0));
    }

    #[test]
    fn duplicates_counted() {
        let d = read_csv_str("a,b\n1,x\n1,x\n2,y\n1,x\n").unwrap();
        assert_eq!(duplicate_row_count(&d), 2);
    }
}
