//! Baseline models, metrics, grouped cross-validation and the leakage probe.

pub mod cox;
mod cv;
pub mod design;
pub mod logistic;
pub mod metrics;
pub mod ols;
mod split;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cv::{evaluate_cv, leakage_probe, ProbeResult};
pub use design::{feature_columns, Encoder, FeatureEncoding};
pub use metrics::{accuracy, auroc, cindex, r2, MetricResult};
pub use split::{assign_groups, split_grouped};

use crate::dataset::{Cell, TabularDataset};
use crate::task::{TaskKind, TaskSpec};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("no usable feature columns")]
    NoFeatures,
    #[error("no rows with a usable target")]
    EmptyData,
    #[error("target has a single class")]
    SingleClass,
    #[error("design matrix is singular")]
    Singular,
    #[error("no events in survival data")]
    NoEvents,
    #[error("no comparable pairs")]
    NoComparablePairs,
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("{groups} groups cannot fill {folds} folds")]
    TooFewGroups { groups: usize, folds: usize },
    #[error("row {0} has no group id")]
    MissingGroupId(usize),
    #[error("column '{0}' not found")]
    MissingFeature(String),
    #[error("target column '{0}' is not usable: {1}")]
    Target(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self { epochs: 500, learning_rate: 0.1 }
    }
}

/// A trained linear model. Coefficients live in standardized feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub task_kind: TaskKind,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_col: Option<String>,
    pub encoder: Encoder,
    /// Sorted class labels; the binary positive class is `classes[1]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub classes: Vec<String>,
    /// One row for binary/regression/survival, one per class (one-vs-rest) otherwise.
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub n_train: usize,
}

/// Labels and targets extracted from the rows that have them.
struct Targets {
    rows: Vec<usize>,
    labels: Vec<String>,
    values: Vec<f64>,
    events: Vec<bool>,
}

fn targets(dataset: &TabularDataset, task: &TaskSpec) -> Result<Targets, ModelError> {
    let tc = dataset.column_index(&task.target_col).ok_or_else(|| ModelError::MissingFeature(task.target_col.clone()))?;
    let time_c = match &task.time_col {
        Some(t) => Some(dataset.column_index(t).ok_or_else(|| ModelError::MissingFeature(t.clone()))?),
        None => None,
    };
    let mut t = Targets { rows: Vec::new(), labels: Vec::new(), values: Vec::new(), events: Vec::new() };
    for (r, row) in dataset.rows().iter().enumerate() {
        let target = &row[tc];
        if target.is_missing() {
            continue;
        }
        match task.task_kind {
            TaskKind::Classification => t.labels.push(target.render()),
            TaskKind::Regression => match target.as_f64() {
                Some(v) => t.values.push(v),
                None => return Err(ModelError::Target(task.target_col.clone(), "non-numeric value".into())),
            },
            TaskKind::Survival => {
                let Some(time) = time_c.and_then(|c| row[c].as_f64()) else { continue };
                let event = target
                    .as_f64()
                    .ok_or_else(|| ModelError::Target(task.target_col.clone(), "event flag must be 0/1".into()))?;
                t.values.push(time);
                t.events.push(event != 0.0);
            }
        }
        t.rows.push(r);
    }
    if t.rows.is_empty() {
        return Err(ModelError::EmptyData);
    }
    Ok(t)
}

pub fn fit(dataset: &TabularDataset, task: &TaskSpec, hyper: Hyperparams, seed: u64) -> Result<FittedModel, ModelError> {
    let features = feature_columns(dataset, task);
    if features.is_empty() {
        return Err(ModelError::NoFeatures);
    }
    let t = targets(dataset, task)?;
    let train = dataset.select_rows(&t.rows).map_err(|e| ModelError::Target(task.target_col.clone(), e.to_string()))?;
    let encoder = Encoder::fit(&train, &features)?;
    let x = encoder.transform(&train)?;
    let mut model = FittedModel {
        task_kind: task.task_kind,
        target: task.target_col.clone(),
        time_col: task.time_col.clone(),
        encoder,
        classes: Vec::new(),
        weights: Vec::new(),
        intercepts: Vec::new(),
        hyperparams: hyper,
        seed,
        n_train: t.rows.len(),
    };
    match task.task_kind {
        TaskKind::Classification => {
            let classes: Vec<String> = t.labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
            if classes.len() < 2 {
                return Err(ModelError::SingleClass);
            }
            let positives: Vec<&String> = if classes.len() == 2 { vec![&classes[1]] } else { classes.iter().collect() };
            for p in positives {
                let y: Vec<f64> = t.labels.iter().map(|l| if l == p { 1.0 } else { 0.0 }).collect();
                let (w, b) = logistic::train_binary(&x, &y, hyper.epochs, hyper.learning_rate, |_, _, _| {});
                model.weights.push(w);
                model.intercepts.push(b);
            }
            model.classes = classes;
        }
        TaskKind::Regression => {
            let (w, b) = ols::fit(&x, &t.values)?;
            model.weights.push(w);
            model.intercepts.push(b);
        }
        TaskKind::Survival => {
            let beta = cox::fit(&x, &t.values, &t.events, hyper.epochs, hyper.learning_rate)?;
            model.weights.push(beta);
            model.intercepts.push(0.0);
        }
    }
    Ok(model)
}

impl FittedModel {
    pub fn feature_names(&self) -> &[String] {
        &self.encoder.feature_names
    }

    /// Coefficients and intercept on the original (unstandardized) scale.
    pub fn raw_coefficients(&self) -> (Vec<f64>, f64) {
        let w = &self.weights[0];
        let raw: Vec<f64> = w.iter().zip(&self.encoder.scales).map(|(c, s)| c / s).collect();
        let shift: f64 = raw.iter().zip(&self.encoder.means).map(|(c, m)| c * m).sum();
        (raw, self.intercepts[0] - shift)
    }

    fn linear_scores(&self, dataset: &TabularDataset) -> Result<Vec<Vec<f64>>, ModelError> {
        let x = self.encoder.transform(dataset)?;
        Ok(x.iter()
            .map(|row| self.weights.iter().zip(&self.intercepts).map(|(w, b)| logistic::linear(row, w, *b)).collect())
            .collect())
    }

    /// One score per row: P(positive) for binary classification, the
    /// prediction for regression, the risk for survival, and the winning
    /// class probability for multiclass.
    pub fn scores(&self, dataset: &TabularDataset) -> Result<Vec<f64>, ModelError> {
        let lin = self.linear_scores(dataset)?;
        Ok(match self.task_kind {
            TaskKind::Classification if self.classes.len() == 2 => lin.iter().map(|z| logistic::sigmoid(z[0])).collect(),
            TaskKind::Classification => self.probabilities_from(&lin).iter().map(|p| p.iter().copied().fold(0.0, f64::max)).collect(),
            _ => lin.iter().map(|z| z[0]).collect(),
        })
    }

    fn probabilities_from(&self, lin: &[Vec<f64>]) -> Vec<Vec<f64>> {
        lin.iter()
            .map(|z| {
                if self.classes.len() == 2 {
                    let p = logistic::sigmoid(z[0]);
                    vec![1.0 - p, p]
                } else {
                    let raw: Vec<f64> = z.iter().map(|&v| logistic::sigmoid(v)).collect();
                    let s: f64 = raw.iter().sum::<f64>().max(1e-300);
                    raw.iter().map(|p| p / s).collect()
                }
            })
            .collect()
    }

    /// Class probabilities per row, columns aligned with `classes`.
    pub fn class_probabilities(&self, dataset: &TabularDataset) -> Result<Vec<Vec<f64>>, ModelError> {
        Ok(self.probabilities_from(&self.linear_scores(dataset)?))
    }

    pub fn predict_labels(&self, dataset: &TabularDataset) -> Result<Vec<String>, ModelError> {
        Ok(self
            .class_probabilities(dataset)?
            .iter()
            .map(|p| {
                let best = p.iter().enumerate().fold(0, |b, (i, v)| if *v > p[b] { i } else { b });
                self.classes[best].clone()
            })
            .collect())
    }

    pub fn task(&self) -> TaskSpec {
        TaskSpec { task_kind: self.task_kind, target_col: self.target.clone(), time_col: self.time_col.clone(), group_col: None }
    }

    /// The task's default metric on the rows of `dataset` that carry a target.
    pub fn evaluate(&self, dataset: &TabularDataset) -> Result<MetricResult, ModelError> {
        let task = self.task();
        let t = targets(dataset, &task)?;
        let rows = dataset.select_rows(&t.rows).map_err(|e| ModelError::Target(self.target.clone(), e.to_string()))?;
        match self.task_kind {
            TaskKind::Classification if self.classes.len() == 2 => {
                let labels: Vec<bool> = t.labels.iter().map(|l| *l == self.classes[1]).collect();
                auroc(&self.scores(&rows)?, &labels)
            }
            TaskKind::Classification => Ok(accuracy(&self.predict_labels(&rows)?, &t.labels)),
            TaskKind::Regression => Ok(r2(&self.scores(&rows)?, &t.values)),
            TaskKind::Survival => cindex(&t.values, &t.events, &self.scores(&rows)?),
        }
    }
}

/// Binary label vector for a classification target (positive = larger sorted label).
pub fn binary_labels(dataset: &TabularDataset, target: &str) -> Result<(Vec<bool>, Vec<String>), ModelError> {
    let c = dataset.column_index(target).ok_or_else(|| ModelError::MissingFeature(target.to_string()))?;
    let labels: Vec<String> = dataset.column_cells(c).map(Cell::render).collect();
    let classes: Vec<String> = labels.iter().filter(|l| !l.is_empty()).cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() != 2 {
        return Err(ModelError::Target(target.to_string(), format!("expected 2 classes, found {}", classes.len())));
    }
    Ok((labels.iter().map(|l| *l == classes[1]).collect(), classes))
}
