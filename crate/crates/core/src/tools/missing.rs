//! Missing-data handling: listwise deletion and mean/mode/kNN imputation.

use std::collections::BTreeMap;

use serde_json::json;

use crate::dataset::{Cell, ColumnKind, TabularDataset};
use crate::registry::{Flag, ToolReport};
use crate::stats;
use crate::task::TaskSpec;

pub fn drop_missing(dataset: &TabularDataset, seed: u64) -> Result<(TabularDataset, ToolReport), String> {
    let removed: Vec<usize> = (0..dataset.row_count()).filter(|&r| dataset.row_has_missing(r)).collect();
    let out = dataset.filter_rows(|r, _| !removed.contains(&r)).map_err(|e| e.to_string())?;
    let mut report = ToolReport::ok(
        "drop_missing",
        seed,
        format!("removed {} of {} rows with missing values; {} rows remain", removed.len(), dataset.row_count(), out.row_count()),
    )
    .metric("rows_before", dataset.row_count() as f64)
    .metric("rows_after", out.row_count() as f64)
    .metric("rows_removed", removed.len() as f64);
    if !removed.is_empty() {
        report.flags.push(Flag { columns: Vec::new(), rows: removed.clone(), reason: "row removed: missing values".into() });
    }
    if out.row_count() == 0 && dataset.row_count() > 0 {
        report.flags.push(Flag { columns: Vec::new(), rows: Vec::new(), reason: "every row had a missing value; dataset is now empty".into() });
    }
    Ok((out, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImputeStrategy {
    Mean,
    Mode,
    Knn,
}

impl std::str::FromStr for ImputeStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mean" => Ok(Self::Mean),
            "mode" => Ok(Self::Mode),
            "knn" => Ok(Self::Knn),
            _ => Err(format!("unknown strategy '{s}'")),
        }
    }
}

/// Most frequent cell; ties go to the smallest rendering.
fn mode_of<'a>(cells: impl Iterator<Item = &'a Cell>) -> Option<Cell> {
    let mut counts: BTreeMap<String, (usize, Cell)> = BTreeMap::new();
    for c in cells.filter(|c| !c.is_missing()) {
        counts.entry(c.render()).or_insert((0, c.clone())).0 += 1;
    }
    let mut best: Option<(usize, Cell)> = None;
    for (_, (n, c)) in counts {
        if best.as_ref().is_none_or(|(bn, _)| n > *bn) {
            best = Some((n, c));
        }
    }
    best.map(|b| b.1)
}

/// Fill value for a column with no observed values at all.
fn empty_fill(kind: ColumnKind) -> Cell {
    match kind {
        ColumnKind::Numeric => Cell::Num(0.0),
        _ => Cell::Text("unknown".into()),
    }
}

/// Fills every missing cell. `mean`: numeric mean, mode elsewhere; `mode`:
/// mode everywhere; `knn`: Euclidean distance over complete numeric
/// non-task columns, neighbour mean (numeric) or majority (other kinds).
pub fn impute(
    dataset: &TabularDataset,
    task: &TaskSpec,
    strategy: ImputeStrategy,
    k: usize,
) -> Result<(TabularDataset, usize), String> {
    let (schema, mut rows) = dataset.to_parts();
    let mut filled = 0;
    let knn_cols: Vec<usize> = if strategy == ImputeStrategy::Knn {
        let cols: Vec<usize> = dataset
            .columns()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ColumnKind::Numeric && c.missing_count == 0 && !task.is_task_column(&c.name))
            .map(|(i, _)| i)
            .collect();
        if k == 0 {
            return Err("knn imputation needs k >= 1".into());
        }
        if cols.is_empty() && dataset.total_missing() > 0 {
            return Err("knn imputation needs at least one complete numeric column".into());
        }
        cols
    } else {
        Vec::new()
    };

    for (c, meta) in dataset.columns().iter().enumerate() {
        if meta.missing_count == 0 {
            continue;
        }
        let observed: Vec<usize> = (0..rows.len()).filter(|&r| !dataset.cell(r, c).is_missing()).collect();
        let global = match (strategy, meta.kind) {
            (ImputeStrategy::Mean | ImputeStrategy::Knn, ColumnKind::Numeric) => {
                stats::mean(&stats::present(&dataset.numeric_column(c))).map(Cell::Num)
            }
            _ => mode_of(dataset.column_cells(c)),
        }
        .unwrap_or_else(|| empty_fill(meta.kind));

        for r in 0..rows.len() {
            if !rows[r][c].is_missing() {
                continue;
            }
            let value = if strategy == ImputeStrategy::Knn && !observed.is_empty() {
                let mut dist: Vec<(f64, usize)> = observed
                    .iter()
                    .map(|&o| {
                        let d2: f64 = knn_cols
                            .iter()
                            .map(|&j| {
                                let a = dataset.cell(r, j).as_f64().unwrap_or(0.0);
                                let b = dataset.cell(o, j).as_f64().unwrap_or(0.0);
                                (a - b).powi(2)
                            })
                            .sum();
                        (d2, o)
                    })
                    .collect();
                dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let neighbours: Vec<&Cell> = dist.iter().take(k).map(|&(_, o)| dataset.cell(o, c)).collect();
                if meta.kind == ColumnKind::Numeric {
                    let vals: Vec<f64> = neighbours.iter().filter_map(|x| x.as_f64()).collect();
                    Cell::Num(stats::mean(&vals).unwrap_or(0.0))
                } else {
                    mode_of(neighbours.into_iter()).unwrap_or_else(|| global.clone())
                }
            } else {
                global.clone()
            };
            rows[r][c] = value;
            filled += 1;
        }
    }
    let out = TabularDataset::new(schema, rows).map_err(|e| e.to_string())?;
    Ok((out, filled))
}

pub fn impute_report(strategy: &str, k: usize, filled: usize, seed: u64) -> ToolReport {
    let mut r = ToolReport::ok("impute", seed, format!("filled {filled} missing cells using {strategy} imputation"))
        .metric("cells_filled", filled as f64);
    r.data = json!({ "strategy": strategy, "k": k });
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::read_csv_str;

    fn task() -> TaskSpec {
        TaskSpec::classification("y")
    }

    #[test]
    fn mean_fills_middle_value() {
        let d = read_csv_str("x,z,y\n1.5,0.5,0\n,0.7,1\n3.5,0.9,0\n").unwrap();
        let (out, n) = impute(&d, &task(), ImputeStrategy::Mean, 5).unwrap();
        assert_eq!(n, 1);
        assert_eq!(out.numeric_column(0), vec![Some(1.5), Some(2.5), Some(3.5)]);
    }

    #[test]
    fn no_missing_is_identity() {
        let d = read_csv_str("x,y\n1,0\n2,1\n").unwrap();
        let (out, _) = impute(&d, &task(), ImputeStrategy::Knn, 1).unwrap();
        assert_eq!(out.fingerprint(), d.fingerprint());
    }

    #[test]
    fn drop_missing_counts() {
        let d = read_csv_str("a,b\n1,2\n,2\n3,4\n5,\n6,7\n").unwrap();
        let (out, r) = drop_missing(&d, 0).unwrap();
        assert_eq!(out.row_count(), 3);
        assert_eq!(r.flagged_rows(), vec![1, 3]);
    }

    #[test]
    fn knn_without_complete_columns_fails() {
        let d = read_csv_str("a,b,y\n1,,0\n,2,1\n3,4,0\n").unwrap();
        assert!(impute(&d, &task(), ImputeStrategy::Knn, 1).is_err());
    }
}
