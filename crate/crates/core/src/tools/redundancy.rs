use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnKind, TabularDataset};
use crate::stats;
use crate::task::TaskSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundantPair {
    pub kept: String,
    pub dropped: String,
    pub correlation: f64,
}

/// Pairs of numeric feature columns with |ρ| ≥ threshold, scanned in column
/// order. Of each pair the column with more missing cells goes (ties: the
/// lexicographically later name); pairs touching an already dropped column
/// are skipped, so a chain a≈b≈c keeps exactly one.
pub fn redundant_pairs(dataset: &TabularDataset, task: &TaskSpec, threshold: f64) -> Vec<RedundantPair> {
    let cols: Vec<usize> = dataset
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.kind == ColumnKind::Numeric && !task.is_task_column(&c.name))
        .map(|(i, _)| i)
        .collect();
    let values: Vec<Vec<Option<f64>>> = cols.iter().map(|&c| dataset.numeric_column(c)).collect();
    let mut dropped = vec![false; cols.len()];
    let mut pairs = Vec::new();
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            if dropped[i] || dropped[j] {
                continue;
            }
            let Some(r) = stats::pearson(&values[i], &values[j]) else { continue };
            if r.abs() < threshold {
                continue;
            }
            let (a, b) = (&dataset.columns()[cols[i]], &dataset.columns()[cols[j]]);
            let drop_j = match a.missing_count.cmp(&b.missing_count) {
                std::cmp::Ordering::Less => true,
                std::cmp::Ordering::Greater => false,
                std::cmp::Ordering::Equal => b.name > a.name,
            };
            let (keep, drop, di) = if drop_j { (a, b, j) } else { (b, a, i) };
            dropped[di] = true;
            pairs.push(RedundantPair { kept: keep.name.clone(), dropped: drop.name.clone(), correlation: stats::round_to(r, 6) });
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::read_csv_str;

    #[test]
    fn duplicate_column_dropped_orthogonal_kept() {
        let d = read_csv_str("a,b,c,y\n1.1,1.1,1,0\n2.3,2.3,-1,1\n3.2,3.2,-1,0\n4.9,4.9,1,1\n").unwrap();
        let p = redundant_pairs(&d, &TaskSpec::classification("y"), 0.98);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].dropped, "b");
    }
}
