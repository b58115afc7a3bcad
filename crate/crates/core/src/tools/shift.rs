//! Two-sample Kolmogorov–Smirnov shift detection.

use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnKind, TabularDataset};
use crate::stats;

/// Largest gap between the two empirical CDFs.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let (a, b) = (stats::sorted_copy(a), stats::sorted_copy(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic p-value of the two-sample statistic (Kolmogorov distribution
/// with the usual small-sample correction on λ).
pub fn ks_pvalue(d: f64, n: usize, m: usize) -> f64 {
    if n == 0 || m == 0 {
        return 1.0;
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnShift {
    pub column: String,
    pub statistic: f64,
    pub p_value: f64,
    pub flagged: bool,
}

pub fn detect_shift(train: &TabularDataset, test: &TabularDataset, min_stat: f64, alpha: f64) -> Result<Vec<ColumnShift>, String> {
    let mut out = Vec::new();
    for (c, meta) in train.columns().iter().enumerate() {
        if meta.kind != ColumnKind::Numeric {
            continue;
        }
        let Some(tc) = test.column_index(&meta.name) else { continue };
        if test.columns()[tc].kind != ColumnKind::Numeric {
            continue;
        }
        let a = stats::present(&train.numeric_column(c));
        let b = stats::present(&test.numeric_column(tc));
        let d = ks_statistic(&a, &b);
        let p = ks_pvalue(d, a.len(), b.len());
        out.push(ColumnShift { column: meta.name.clone(), statistic: d, p_value: p, flagged: d > min_stat && p < alpha });
    }
    if out.is_empty() {
        return Err("no shared numeric columns".into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_disjoint() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_statistic(&a, &a), 0.0);
        assert_eq!(ks_statistic(&a, &[10.0, 11.0]), 1.0);
        assert_eq!(ks_pvalue(0.0, 10, 10), 1.0);
        assert!(ks_pvalue(1.0, 100, 100) < 1e-10);
    }

    #[test]
    fn ties_across_samples() {
        assert_eq!(ks_statistic(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]), 1.0 / 3.0);
    }
}
