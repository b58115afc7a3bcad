//! Exact Shapley values of the K-nearest-neighbour utility.
//!
//! For one validation point with training points sorted by distance
//! α_1..α_N (ties by index), the utility of a subset S is the fraction of
//! its min(K, |S|) nearest members (divided by K) whose label matches.
//! Its Shapley values satisfy
//!   s_N = 1[y_N = y] / max(N, K)
//!   s_i = s_{i+1} + (1[y_i = y] − 1[y_{i+1} = y]) / K · min(K, i) / i
//! and the per-point values are averaged over the validation set.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Training points ordered by distance to `query`, ties by index.
pub fn neighbour_order(train_x: &[Vec<f64>], query: &[f64]) -> Vec<usize> {
    let d: Vec<f64> = train_x.iter().map(|x| sq_dist(x, query)).collect();
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    order
}

/// Values for a single validation point.
pub fn knn_shapley_single<L: PartialEq>(train_x: &[Vec<f64>], train_y: &[L], query: &[f64], label: &L, k: usize) -> Vec<f64> {
    let n = train_x.len();
    let mut s = vec![0.0; n];
    if n == 0 {
        return s;
    }
    let order = neighbour_order(train_x, query);
    let hit = |i: usize| if train_y[order[i]] == *label { 1.0 } else { 0.0 };
    let kf = k as f64;
    s[order[n - 1]] = hit(n - 1) / n.max(k) as f64;
    for i in (0..n - 1).rev() {
        // i is 0-based; the recursion's 1-based position is i + 1
        let pos = (i + 1) as f64;
        s[order[i]] = s[order[i + 1]] + (hit(i) - hit(i + 1)) / kf * (kf.min(pos) / pos);
    }
    s
}

pub fn knn_shapley<L: PartialEq>(
    train_x: &[Vec<f64>],
    train_y: &[L],
    val_x: &[Vec<f64>],
    val_y: &[L],
    k: usize,
) -> Result<Vec<f64>, String> {
    if k == 0 {
        return Err("K must be at least 1".into());
    }
    if k > train_x.len() {
        return Err(format!("K = {k} exceeds the {} training points", train_x.len()));
    }
    if val_x.is_empty() {
        return Err("empty validation set".into());
    }
    let mut total = vec![0.0; train_x.len()];
    for (q, l) in val_x.iter().zip(val_y) {
        for (t, v) in total.iter_mut().zip(knn_shapley_single(train_x, train_y, q, l, k)) {
            *t += v;
        }
    }
    let m = val_x.len() as f64;
    Ok(total.into_iter().map(|t| t / m).collect())
}

/// Deterministic train/validation row split.
pub fn holdout_split(n: usize, validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n as f64) * validation_fraction).round().clamp(1.0, (n.max(2) - 1) as f64) as usize;
    let mut val: Vec<usize> = idx[..n_val].to_vec();
    let mut train: Vec<usize> = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_value_is_marginal_gain() {
        let v = knn_shapley(&[vec![0.0]], &[1], &[vec![0.5]], &[1], 1).unwrap();
        assert_eq!(v, vec![1.0]);
    }

    #[test]
    fn duplicate_points_share_value() {
        let x = vec![vec![0.0], vec![1.0], vec![1.0], vec![3.0]];
        let y = vec![0, 1, 1, 0];
        let v = knn_shapley(&x, &y, &[vec![0.9], vec![2.5]], &[1, 0], 2).unwrap();
        assert!((v[1] - v[2]).abs() < 1e-15);
    }

    #[test]
    fn k_larger_than_train_is_error() {
        assert!(knn_shapley(&[vec![0.0]], &[1], &[vec![0.0]], &[1], 2).is_err());
    }
}
