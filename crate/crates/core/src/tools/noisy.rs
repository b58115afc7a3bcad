//! Label-noise flags from out-of-fold logistic predictions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::models::{self, Hyperparams};
use crate::task::{TaskKind, TaskSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyLabel {
    pub row: usize,
    pub given: String,
    pub predicted: String,
    pub confidence: f64,
}

/// A row is flagged when its out-of-fold prediction disagrees with the
/// given label with probability at least `margin`.
pub fn flag_noisy_labels(
    dataset: &TabularDataset,
    task: &TaskSpec,
    folds: usize,
    margin: f64,
    seed: u64,
    hyper: Hyperparams,
) -> Result<Vec<NoisyLabel>, String> {
    if task.task_kind != TaskKind::Classification {
        return Err("noisy-label detection needs a classification task".into());
    }
    let tc = dataset.column_index(&task.target_col).ok_or_else(|| format!("target '{}' not found", task.target_col))?;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for c in dataset.column_cells(tc).filter(|c| !c.is_missing()) {
        *counts.entry(c.render()).or_default() += 1;
    }
    if counts.len() < 2 || counts.values().any(|&n| n < folds) {
        return Err(format!("degenerate class counts {counts:?} for {folds} folds"));
    }
    let group = task.group_col.as_deref().filter(|g| dataset.column_index(g).is_some());
    let assignment = models::split_grouped(dataset, group, folds, seed).map_err(|e| e.to_string())?;
    let mut flagged = Vec::new();
    for f in 0..folds {
        let train_idx: Vec<usize> = (0..assignment.len()).filter(|&i| assignment[i] != f).collect();
        let test_idx: Vec<usize> = (0..assignment.len()).filter(|&i| assignment[i] == f).collect();
        let train = dataset.select_rows(&train_idx).map_err(|e| e.to_string())?;
        let test = dataset.select_rows(&test_idx).map_err(|e| e.to_string())?;
        let model = models::fit(&train, task, hyper, seed).map_err(|e| e.to_string())?;
        let probs = model.class_probabilities(&test).map_err(|e| e.to_string())?;
        for (k, &row) in test_idx.iter().enumerate() {
            let given = dataset.cell(row, tc);
            if given.is_missing() {
                continue;
            }
            let p = &probs[k];
            let best = p.iter().enumerate().fold(0, |b, (i, v)| if *v > p[b] { i } else { b });
            let predicted = &model.classes[best];
            if *predicted != given.render() && p[best] >= margin {
                flagged.push(NoisyLabel { row, given: given.render(), predicted: predicted.clone(), confidence: p[best] });
            }
        }
    }
    flagged.sort_by_key(|n| n.row);
    Ok(flagged)
}
