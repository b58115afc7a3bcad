//! Collapsing repeated measurements to one row per entity.

use std::collections::{BTreeMap, HashMap};

use crate::dataset::{Cell, ColumnKind, TabularDataset};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationPolicy {
    /// Row with the largest `time_col` value (or the last occurrence without one).
    Last,
    Mean,
    First,
}

impl std::str::FromStr for AggregationPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "last" | "last_by" => Ok(Self::Last),
            "mean" => Ok(Self::Mean),
            "first" => Ok(Self::First),
            _ => Err(format!("unknown aggregation policy '{s}'")),
        }
    }
}

/// Groups rows by id in first-appearance order.
pub fn group_rows(dataset: &TabularDataset, id_col: usize) -> Result<Vec<Vec<usize>>, String> {
    let missing: Vec<usize> = (0..dataset.row_count()).filter(|&r| dataset.cell(r, id_col).is_missing()).collect();
    if !missing.is_empty() {
        return Err(format!("rows without an id: {missing:?}"));
    }
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for r in 0..dataset.row_count() {
        let key = dataset.cell(r, id_col).render();
        let g = *index.entry(key).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(r);
    }
    Ok(groups)
}

fn mode_first_seen<'a>(cells: impl Iterator<Item = &'a Cell>) -> Cell {
    let mut counts: BTreeMap<String, (usize, usize, Cell)> = BTreeMap::new();
    for (i, c) in cells.enumerate().filter(|(_, c)| !c.is_missing()) {
        counts.entry(c.render()).or_insert((0, i, c.clone())).0 += 1;
    }
    counts
        .into_values()
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
        .map(|x| x.2)
        .unwrap_or(Cell::Missing)
}

pub fn aggregate_records(
    dataset: &TabularDataset,
    id_col: &str,
    policy: AggregationPolicy,
    time_col: Option<&str>,
) -> Result<TabularDataset, String> {
    let idc = dataset.column_index(id_col).ok_or_else(|| format!("id column '{id_col}' not found"))?;
    let tc = match time_col {
        Some(t) => {
            let c = dataset.column_index(t).ok_or_else(|| format!("time column '{t}' not found"))?;
            if dataset.columns()[c].kind == ColumnKind::Text {
                return Err(format!("time column '{t}' must be numeric"));
            }
            Some(c)
        }
        None => None,
    };
    let groups = group_rows(dataset, idc)?;
    let mut rows = Vec::with_capacity(groups.len());
    for g in &groups {
        let row = match policy {
            AggregationPolicy::First => dataset.rows()[g[0]].clone(),
            AggregationPolicy::Last => {
                let pick = match tc {
                    // max time; `>=` keeps the last occurrence among ties
                    Some(c) => g.iter().copied().fold(g[0], |best, r| {
                        let (bt, rt) = (dataset.cell(best, c).as_f64(), dataset.cell(r, c).as_f64());
                        match (bt, rt) {
                            (_, None) => best,
                            (None, Some(_)) => r,
                            (Some(b), Some(x)) => if x >= b { r } else { best },
                        }
                    }),
                    None => *g.last().expect("groups are non-empty"),
                };
                dataset.rows()[pick].clone()
            }
            AggregationPolicy::Mean => dataset
                .columns()
                .iter()
                .enumerate()
                .map(|(c, meta)| {
                    if c == idc {
                        return dataset.cell(g[0], c).clone();
                    }
                    match meta.kind {
                        ColumnKind::Numeric => {
                            let v: Vec<f64> = g.iter().filter_map(|&r| dataset.cell(r, c).as_f64()).collect();
                            stats::mean(&v).map(Cell::Num).unwrap_or(Cell::Missing)
                        }
                        _ => mode_first_seen(g.iter().map(|&r| dataset.cell(r, c))),
                    }
                })
                .collect(),
        };
        rows.push(row);
    }
    TabularDataset::new(dataset.schema(), rows).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::read_csv_str;

    #[test]
    fn last_by_time_picks_max() {
        let d = read_csv_str("id,t,x\n7,1,10.5\n7,4,40.5\n7,2,20.5\n8,1,1.5\n").unwrap();
        let out = aggregate_records(&d, "id", AggregationPolicy::Last, Some("t")).unwrap();
        assert_eq!(out.row_count(), 2);
        assert_eq!(out.cell(0, 2).as_f64(), Some(40.5));
    }

    #[test]
    fn mean_policy_averages() {
        let d = read_csv_str("id,x\n1,2.0\n1,4.0\n2,1.5\n").unwrap();
        let out = aggregate_records(&d, "id", AggregationPolicy::Mean, None).unwrap();
        assert_eq!(out.cell(0, 1).as_f64(), Some(3.0));
    }

    #[test]
    fn unique_ids_identity() {
        let d = read_csv_str("id,x\n1,2.5\n2,4.5\n3,1.5\n").unwrap();
        for p in [AggregationPolicy::Last, AggregationPolicy::Mean, AggregationPolicy::First] {
            assert_eq!(aggregate_records(&d, "id", p, None).unwrap().fingerprint(), d.fingerprint());
        }
    }
}
