//! Ranking metrics with exact pair counting.
//!
//! Both AUROC and the C-index are computed from integer counts of
//! concordant (×2) and tied (×1) pairs, so they agree bit-for-bit with a
//! brute-force pair loop.

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub name: String,
    pub value: f64,
    pub n_evaluated: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub folds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
}

impl MetricResult {
    pub fn single(name: &str, value: f64, n: usize) -> Self {
        Self { name: name.to_string(), value, n_evaluated: n, folds: Vec::new(), std: None }
    }
}

/// Probability that a random positive outranks a random negative; ties count half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<MetricResult, ModelError> {
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(ModelError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut twice, mut neg_below) = (0u64, 0u64);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        let (mut p, mut q) = (0u64, 0u64);
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] {
                p += 1;
            } else {
                q += 1;
            }
            k += 1;
        }
        twice += 2 * p * neg_below + p * q;
        neg_below += q;
    }
    let value = twice as f64 / (2 * pos * neg) as f64;
    Ok(MetricResult::single("auroc", value, scores.len()))
}

struct Fenwick(Vec<u64>);

impl Fenwick {
    fn add(&mut self, mut i: usize) {
        i += 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks < i.
    fn prefix(&self, mut i: usize) -> u64 {
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Harrell's C over comparable pairs (t_i < t_j, event_i); ties in risk count half.
pub fn cindex(times: &[f64], events: &[bool], risk: &[f64]) -> Result<MetricResult, ModelError> {
    let n = times.len();
    let mut distinct: Vec<f64> = risk.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let rank = |r: f64| distinct.partition_point(|&v| v < r);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
    let mut tree = Fenwick(vec![0; distinct.len() + 1]);
    let (mut inserted, mut comparable, mut twice) = (0u64, 0u64, 0u64);
    let mut k = 0;
    while k < n {
        let t = times[order[k]];
        let mut end = k;
        while end < n && times[order[end]] == t {
            end += 1;
        }
        for &i in &order[k..end] {
            if events[i] {
                let r = rank(risk[i]);
                let less = tree.prefix(r);
                let equal = tree.prefix(r + 1) - less;
                comparable += inserted;
                twice += 2 * less + equal;
            }
        }
        for &i in &order[k..end] {
            tree.add(rank(risk[i]));
            inserted += 1;
        }
        k = end;
    }
    if comparable == 0 {
        return Err(ModelError::NoComparablePairs);
    }
    Ok(MetricResult::single("c_index", twice as f64 / (2 * comparable) as f64, n))
}

pub fn accuracy(predicted: &[String], actual: &[String]) -> MetricResult {
    let hits = predicted.iter().zip(actual).filter(|(a, b)| a == b).count();
    let n = actual.len();
    MetricResult::single("accuracy", if n == 0 { 0.0 } else { hits as f64 / n as f64 }, n)
}

/// Coefficient of determination, floored at 0 so it stays in [0, 1].
pub fn r2(predicted: &[f64], actual: &[f64]) -> MetricResult {
    let n = actual.len();
    let m = actual.iter().sum::<f64>() / n.max(1) as f64;
    let ss_tot: f64 = actual.iter().map(|y| (y - m).powi(2)).sum();
    let ss_res: f64 = predicted.iter().zip(actual).map(|(p, y)| (y - p).powi(2)).sum();
    let v = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 };
    MetricResult::single("r2", v.clamp(0.0, 1.0), n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auroc_orderings() {
        let labels = [false, false, true, true];
        assert_eq!(auroc(&[0.1, 0.2, 0.3, 0.4], &labels).unwrap().value, 1.0);
        assert_eq!(auroc(&[0.4, 0.3, 0.2, 0.1], &labels).unwrap().value, 0.0);
        assert_eq!(auroc(&[0.5; 4], &labels).unwrap().value, 0.5);
        assert_eq!(auroc(&[0.1, 0.2], &[true, true]), Err(ModelError::SingleClass));
    }

    #[test]
    fn cindex_orderings() {
        let t = [1.0, 2.0, 3.0, 4.0];
        let e = [true; 4];
        assert_eq!(cindex(&t, &e, &[-1.0, -2.0, -3.0, -4.0]).unwrap().value, 1.0);
        assert_eq!(cindex(&t, &e, &[0.0; 4]).unwrap().value, 0.5);
        assert_eq!(cindex(&t, &[false; 4], &[0.0; 4]), Err(ModelError::NoComparablePairs));
    }

    #[test]
    fn tied_times_are_not_comparable() {
        let r = cindex(&[1.0, 1.0], &[true, true], &[2.0, 1.0]);
        assert_eq!(r, Err(ModelError::NoComparablePairs));
    }
}
