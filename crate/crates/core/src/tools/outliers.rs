use std::collections::BTreeSet;

use serde_json::json;

use crate::dataset::{ColumnKind, TabularDataset};
use crate::registry::{Flag, ReportTable, ToolReport};
use crate::stats;
use crate::task::TaskSpec;

/// [Q1 − k·IQR, Q3 + k·IQR] over already sorted values.
pub fn iqr_bounds(sorted: &[f64], k: f64) -> (f64, f64) {
    let q1 = stats::quantile_sorted(sorted, 0.25).unwrap_or(0.0);
    let q3 = stats::quantile_sorted(sorted, 0.75).unwrap_or(0.0);
    let iqr = q3 - q1;
    (q1 - k * iqr, q3 + k * iqr)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnOutliers {
    pub column: String,
    pub q1: f64,
    pub q3: f64,
    pub lower: f64,
    pub upper: f64,
    pub rows: Vec<usize>,
}

/// Tukey fences per numeric column. Task columns are skipped when
/// `skip_task_columns` is set.
pub fn detect_outliers(dataset: &TabularDataset, task: &TaskSpec, k: f64, skip_task_columns: bool) -> Vec<ColumnOutliers> {
    let mut out = Vec::new();
    for (c, meta) in dataset.columns().iter().enumerate() {
        if meta.kind != ColumnKind::Numeric || (skip_task_columns && task.is_task_column(&meta.name)) {
            continue;
        }
        let values = dataset.numeric_column(c);
        let sorted = stats::sorted_copy(&stats::present(&values));
        if sorted.is_empty() {
            continue;
        }
        let (lower, upper) = iqr_bounds(&sorted, k);
        let rows = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_some_and(|v| v < lower || v > upper))
            .map(|(r, _)| r)
            .collect();
        out.push(ColumnOutliers {
            column: meta.name.clone(),
            q1: stats::quantile_sorted(&sorted, 0.25).unwrap_or(0.0),
            q3: stats::quantile_sorted(&sorted, 0.75).unwrap_or(0.0),
            lower,
            upper,
            rows,
        });
    }
    out
}

pub fn outlier_report(found: &[ColumnOutliers], k: f64, seed: u64) -> ToolReport {
    let mut table = ReportTable::new("bounds", &["column", "q1", "q3", "lower", "upper", "count"]);
    let mut all = BTreeSet::new();
    let mut flags = Vec::new();
    for c in found {
        table.push(vec![json!(c.column), json!(c.q1), json!(c.q3), json!(c.lower), json!(c.upper), json!(c.rows.len())]);
        if !c.rows.is_empty() {
            all.extend(c.rows.iter().copied());
            flags.push(Flag {
                columns: vec![c.column.clone()],
                rows: c.rows.clone(),
                reason: format!("outside [{:.4}, {:.4}]", c.lower, c.upper),
            });
        }
    }
    let rows: Vec<usize> = all.into_iter().collect();
    let mut r = ToolReport::ok(
        "detect_outliers",
        seed,
        format!("{} rows outside the IQR fences (k = {k}) across {} columns", rows.len(), flags.len()),
    )
    .metric("outlier_rows", rows.len() as f64);
    r.tables.push(table);
    r.flags = flags;
    r.data = json!({ "rows": rows, "k": k });
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::read_csv_str;

    #[test]
    fn extreme_value_flagged() {
        let mut text = String::from("x,y\n");
        for i in 0..20 {
            text.push_str(&format!("{},{}\n", (i as f64) * 0.01, i % 2));
        }
        text.push_str("1000000,1\n");
        let d = read_csv_str(&text).unwrap();
        let found = detect_outliers(&d, &TaskSpec::classification("y"), 1.5, true);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].rows, vec![20]);
    }
}
