//! Permutation importance: metric drop after shuffling one source column.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::models::FittedModel;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub column: String,
    pub mean: f64,
    pub std: f64,
}

pub fn permutation_importance(
    model: &FittedModel,
    dataset: &TabularDataset,
    repeats: usize,
    seed: u64,
) -> Result<(f64, Vec<Importance>), String> {
    let baseline = model.evaluate(dataset).map_err(|e| e.to_string())?.value;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for enc in &model.encoder.encodings {
        let c = dataset.column_index(enc.column()).ok_or_else(|| format!("column '{}' not found", enc.column()))?;
        let mut drops = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let mut cells: Vec<_> = dataset.column_cells(c).cloned().collect();
            cells.shuffle(&mut rng);
            let shuffled = dataset.with_column(c, cells, None).map_err(|e| e.to_string())?;
            let m = model.evaluate(&shuffled).map_err(|e| e.to_string())?.value;
            drops.push(baseline - m);
        }
        out.push(Importance { column: enc.column().to_string(), mean: stats::mean(&drops).unwrap_or(0.0), std: stats::sample_std(&drops) });
    }
    Ok((baseline, out))
}
