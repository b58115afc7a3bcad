//! Training-dynamics characterization: confidence in the true label across
//! gradient-descent checkpoints, bucketed into easy / ambiguous / hard.

use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::models::{self, logistic, Encoder, Hyperparams};
use crate::stats;
use crate::task::{TaskKind, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    Easy,
    Ambiguous,
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub easy_confidence: f64,
    pub hard_confidence: f64,
    pub max_variability: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { easy_confidence: 0.75, hard_confidence: 0.25, max_variability: 0.1 }
    }
}

impl Thresholds {
    pub fn bucket(&self, mean_confidence: f64, variability: f64) -> Bucket {
        if mean_confidence >= self.easy_confidence && variability < self.max_variability {
            Bucket::Easy
        } else if mean_confidence <= self.hard_confidence && variability < self.max_variability {
            Bucket::Hard
        } else {
            Bucket::Ambiguous
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationLabel {
    pub row: usize,
    pub mean_confidence: f64,
    pub variability: f64,
    pub bucket: Bucket,
}

/// Epochs (1-based) at which confidences are recorded: `checkpoints`
/// evenly spaced epochs ending at the last one.
pub fn checkpoint_epochs(epochs: usize, checkpoints: usize) -> Vec<usize> {
    (1..=checkpoints).map(|i| ((i * epochs) as f64 / checkpoints as f64).round().max(1.0) as usize).collect()
}

pub fn characterize_examples(
    dataset: &TabularDataset,
    task: &TaskSpec,
    checkpoints: usize,
    hyper: Hyperparams,
    thresholds: Thresholds,
) -> Result<Vec<CharacterizationLabel>, String> {
    if task.task_kind != TaskKind::Classification {
        return Err("characterization needs a classification task".into());
    }
    if checkpoints == 0 || checkpoints > hyper.epochs {
        return Err(format!("checkpoints must be in 1..={}", hyper.epochs));
    }
    let tc = dataset.column_index(&task.target_col).ok_or_else(|| format!("target '{}' not found", task.target_col))?;
    let (labels, _) = models::binary_labels(dataset, &task.target_col).map_err(|e| e.to_string())?;
    let rows: Vec<usize> = (0..dataset.row_count()).filter(|&r| !dataset.cell(r, tc).is_missing()).collect();
    let train = dataset.select_rows(&rows).map_err(|e| e.to_string())?;
    let features = models::feature_columns(&train, task);
    if features.is_empty() {
        return Err("no feature columns".into());
    }
    let enc = Encoder::fit(&train, &features).map_err(|e| e.to_string())?;
    let x = enc.transform(&train).map_err(|e| e.to_string())?;
    let y: Vec<f64> = rows.iter().map(|&r| if labels[r] { 1.0 } else { 0.0 }).collect();

    let marks = checkpoint_epochs(hyper.epochs, checkpoints);
    let mut conf: Vec<Vec<f64>> = vec![Vec::with_capacity(checkpoints); rows.len()];
    logistic::train_binary(&x, &y, hyper.epochs, hyper.learning_rate, |epoch, w, b| {
        for _ in marks.iter().filter(|&&m| m == epoch) {
            for (i, xi) in x.iter().enumerate() {
                let p = logistic::sigmoid(logistic::linear(xi, w, b));
                conf[i].push(if y[i] == 1.0 { p } else { 1.0 - p });
            }
        }
    });
    Ok(rows
        .iter()
        .zip(conf)
        .map(|(&row, c)| {
            let mean = stats::mean(&c).unwrap_or(0.0);
            let var = stats::population_std(&c);
            CharacterizationLabel { row, mean_confidence: mean, variability: var, bucket: thresholds.bucket(mean, var) }
        })
        .collect())
}
