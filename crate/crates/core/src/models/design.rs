//! Feature encoding: one-hot categoricals, mean-fill, standardization.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::dataset::{Cell, ColumnKind, TabularDataset};
use crate::stats;
use crate::task::TaskSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureEncoding {
    Numeric { column: String, fill: f64 },
    /// One indicator per kept level; the lexicographically first level is the reference.
    Categorical { column: String, levels: Vec<String> },
}

impl FeatureEncoding {
    pub fn column(&self) -> &str {
        match self {
            FeatureEncoding::Numeric { column, .. } | FeatureEncoding::Categorical { column, .. } => column,
        }
    }

    fn width(&self) -> usize {
        match self {
            FeatureEncoding::Numeric { .. } => 1,
            FeatureEncoding::Categorical { levels, .. } => levels.len(),
        }
    }
}

/// Learned on the training data and re-applied to any dataset with the
/// same source columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub encodings: Vec<FeatureEncoding>,
    pub feature_names: Vec<String>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

/// Model inputs: numeric and categorical columns that are not named by the task.
pub fn feature_columns(dataset: &TabularDataset, task: &TaskSpec) -> Vec<String> {
    dataset
        .columns()
        .iter()
        .filter(|c| matches!(c.kind, ColumnKind::Numeric | ColumnKind::Categorical))
        .filter(|c| !task.is_task_column(&c.name))
        .map(|c| c.name.clone())
        .collect()
}

impl Encoder {
    pub fn fit(dataset: &TabularDataset, columns: &[String]) -> Result<Self, ModelError> {
        let mut encodings = Vec::with_capacity(columns.len());
        let mut names = Vec::new();
        for name in columns {
            let col = dataset.column_index(name).ok_or_else(|| ModelError::MissingFeature(name.clone()))?;
            match dataset.columns()[col].kind {
                ColumnKind::Numeric => {
                    let present = stats::present(&dataset.numeric_column(col));
                    let fill = stats::mean(&present).unwrap_or(0.0);
                    names.push(name.clone());
                    encodings.push(FeatureEncoding::Numeric { column: name.clone(), fill });
                }
                _ => {
                    let levels: BTreeSet<String> =
                        dataset.column_cells(col).filter(|c| !c.is_missing()).map(Cell::render).collect();
                    let kept: Vec<String> = levels.into_iter().skip(1).collect();
                    for l in &kept {
                        names.push(format!("{name}={l}"));
                    }
                    encodings.push(FeatureEncoding::Categorical { column: name.clone(), levels: kept });
                }
            }
        }
        let mut enc = Encoder { encodings, feature_names: names, means: Vec::new(), scales: Vec::new() };
        let raw = enc.raw_matrix(dataset)?;
        let width = enc.feature_names.len();
        for j in 0..width {
            let col: Vec<f64> = raw.iter().map(|r| r[j]).collect();
            let m = stats::mean(&col).unwrap_or(0.0);
            let s = stats::population_std(&col);
            enc.means.push(m);
            enc.scales.push(if s > 1e-12 { s } else { 1.0 });
        }
        Ok(enc)
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    /// Unstandardized encoded rows.
    pub fn raw_matrix(&self, dataset: &TabularDataset) -> Result<Vec<Vec<f64>>, ModelError> {
        let mut idx = Vec::with_capacity(self.encodings.len());
        for e in &self.encodings {
            idx.push(dataset.column_index(e.column()).ok_or_else(|| ModelError::MissingFeature(e.column().into()))?);
        }
        let width: usize = self.encodings.iter().map(FeatureEncoding::width).sum();
        let mut out = Vec::with_capacity(dataset.row_count());
        for row in dataset.rows() {
            let mut v = Vec::with_capacity(width);
            for (e, &c) in self.encodings.iter().zip(&idx) {
                match e {
                    FeatureEncoding::Numeric { fill, .. } => v.push(row[c].as_f64().unwrap_or(*fill)),
                    FeatureEncoding::Categorical { levels, .. } => {
                        let r = if row[c].is_missing() { None } else { Some(row[c].render()) };
                        for l in levels {
                            v.push(if r.as_deref() == Some(l.as_str()) { 1.0 } else { 0.0 });
                        }
                    }
                }
            }
            out.push(v);
        }
        Ok(out)
    }

    /// Standardized encoded rows.
    pub fn transform(&self, dataset: &TabularDataset) -> Result<Vec<Vec<f64>>, ModelError> {
        let mut m = self.raw_matrix(dataset)?;
        for row in &mut m {
            for (j, x) in row.iter_mut().enumerate() {
                *x = (*x - self.means[j]) / self.scales[j];
            }
        }
        Ok(m)
    }
}
