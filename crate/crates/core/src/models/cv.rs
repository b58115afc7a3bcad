use serde::{Deserialize, Serialize};

use super::{fit, split_grouped, Hyperparams, MetricResult, ModelError};
use crate::dataset::TabularDataset;
use crate::stats;
use crate::task::TaskSpec;

/// K-fold cross-validation with the task's default metric. Folds are
/// grouped by `task.group_col` when that column is present. Folds where the
/// metric is undefined (e.g. a single class) are skipped.
pub fn evaluate_cv(
    dataset: &TabularDataset,
    task: &TaskSpec,
    folds: usize,
    seed: u64,
    hyper: Hyperparams,
) -> Result<MetricResult, ModelError> {
    let group = task.group_col.as_deref().filter(|g| dataset.column_index(g).is_some());
    let assignment = split_grouped(dataset, group, folds, seed)?;
    let mut values = Vec::with_capacity(folds);
    let mut n = 0;
    let mut name = String::new();
    let mut last_err = None;
    for f in 0..folds {
        let train_idx: Vec<usize> = (0..assignment.len()).filter(|&i| assignment[i] != f).collect();
        let test_idx: Vec<usize> = (0..assignment.len()).filter(|&i| assignment[i] == f).collect();
        let train = dataset.select_rows(&train_idx).map_err(|e| ModelError::Target(task.target_col.clone(), e.to_string()))?;
        let test = dataset.select_rows(&test_idx).map_err(|e| ModelError::Target(task.target_col.clone(), e.to_string()))?;
        let model = fit(&train, task, hyper, seed)?;
        match model.evaluate(&test) {
            Ok(m) => {
                n += m.n_evaluated;
                name = m.name;
                values.push(m.value);
            }
            Err(e @ (ModelError::SingleClass | ModelError::NoComparablePairs | ModelError::EmptyData)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    if values.is_empty() {
        return Err(last_err.unwrap_or(ModelError::EmptyData));
    }
    let mean = stats::mean(&values).unwrap_or(0.0);
    Ok(MetricResult { name, value: mean, n_evaluated: n, std: Some(stats::sample_std(&values)), folds: values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub metric: String,
    pub with_suspects: f64,
    pub without_suspects: f64,
    pub gap: f64,
}

/// Cross-validated metric with and without the suspect columns.
pub fn leakage_probe(
    dataset: &TabularDataset,
    task: &TaskSpec,
    suspects: &[String],
    folds: usize,
    seed: u64,
    hyper: Hyperparams,
) -> Result<ProbeResult, ModelError> {
    let with = evaluate_cv(dataset, task, folds, seed, hyper)?;
    if suspects.is_empty() {
        return Ok(ProbeResult { metric: with.name, with_suspects: with.value, without_suspects: with.value, gap: 0.0 });
    }
    let reduced = dataset
        .drop_columns(suspects)
        .map_err(|_| ModelError::MissingFeature(suspects.join(",")))?;
    let without = evaluate_cv(&reduced, task, folds, seed, hyper)?;
    Ok(ProbeResult {
        metric: with.name,
        with_suspects: with.value,
        without_suspects: without.value,
        gap: with.value - without.value,
    })
}
