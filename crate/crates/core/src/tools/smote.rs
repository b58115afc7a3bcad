//! SMOTE oversampling of the minority class.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Cell, ColumnKind, TabularDataset};
use crate::task::{TaskKind, TaskSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRow {
    /// Index of the new row in the output.
    pub row: usize,
    pub base: usize,
    pub neighbour: usize,
}

/// Appends `majority − minority` synthetic minority rows. Numeric feature
/// cells are interpolated x + u·(x_nn − x); other cells are copied from x,
/// except identifiers, which get fresh values past the largest existing id.
pub fn smote_balance(
    dataset: &TabularDataset,
    task: &TaskSpec,
    k: usize,
    seed: u64,
) -> Result<(TabularDataset, Vec<SyntheticRow>), String> {
    if task.task_kind != TaskKind::Classification {
        return Err("SMOTE needs a classification task".into());
    }
    let tc = dataset.column_index(&task.target_col).ok_or_else(|| format!("target '{}' not found", task.target_col))?;
    let mut by_class: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (r, c) in dataset.column_cells(tc).enumerate() {
        if !c.is_missing() {
            by_class.entry(c.render()).or_default().push(r);
        }
    }
    if by_class.len() != 2 {
        return Err(format!("SMOTE needs a binary target, found {} classes", by_class.len()));
    }
    let mut classes: Vec<&Vec<usize>> = by_class.values().collect();
    classes.sort_by_key(|v| v.len());
    let (minority, majority) = (classes[0].clone(), classes[1].len());
    if minority.len() < 2 {
        return Err(format!("minority class has {} rows; need at least 2", minority.len()));
    }
    if k == 0 {
        return Err("k must be at least 1".into());
    }
    let needed = majority - minority.len();
    if needed == 0 {
        return Ok((dataset.clone(), Vec::new()));
    }
    let numeric: Vec<usize> = dataset
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.kind == ColumnKind::Numeric && !task.is_task_column(&c.name))
        .map(|(i, _)| i)
        .collect();
    let id_cols: Vec<usize> = dataset
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.kind == ColumnKind::Identifier)
        .map(|(i, _)| i)
        .collect();

    let dist = |a: usize, b: usize| -> f64 {
        numeric
            .iter()
            .filter_map(|&c| Some((dataset.cell(a, c).as_f64()? - dataset.cell(b, c).as_f64()?).powi(2)))
            .sum()
    };
    let k_eff = k.min(minority.len() - 1);
    let neighbours: Vec<Vec<usize>> = minority
        .iter()
        .map(|&a| {
            let mut others: Vec<(f64, usize)> = minority.iter().filter(|&&b| b != a).map(|&b| (dist(a, b), b)).collect();
            others.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            others.into_iter().take(k_eff).map(|(_, b)| b).collect()
        })
        .collect();

    let mut next_id: Vec<f64> = id_cols
        .iter()
        .map(|&c| dataset.column_cells(c).filter_map(Cell::as_f64).fold(0.0, f64::max) + 1.0)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (schema, mut rows) = dataset.to_parts();
    let mut synth = Vec::with_capacity(needed);
    for _ in 0..needed {
        let bi = rng.random_range(0..minority.len());
        let base = minority[bi];
        let nn = neighbours[bi][rng.random_range(0..neighbours[bi].len())];
        let u: f64 = rng.random();
        let mut row = dataset.rows()[base].clone();
        for &c in &numeric {
            if let (Some(x), Some(y)) = (dataset.cell(base, c).as_f64(), dataset.cell(nn, c).as_f64()) {
                row[c] = Cell::Num(x + u * (y - x));
            }
        }
        for (slot, &c) in id_cols.iter().enumerate() {
            if dataset.cell(base, c).as_f64().is_some() {
                row[c] = Cell::Num(next_id[slot]);
                next_id[slot] += 1.0;
            } else {
                row[c] = Cell::Text(format!("synthetic-{}", rows.len()));
            }
        }
        synth.push(SyntheticRow { row: rows.len(), base, neighbour: nn });
        rows.push(row);
    }
    let out = TabularDataset::new(schema, rows).map_err(|e| e.to_string())?;
    Ok((out, synth))
}
