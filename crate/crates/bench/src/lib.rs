//! Seeded inputs shared by the benchmarks.

use curate_core::harness::{gen_clean, CleanSpec};
use curate_core::{TabularDataset, TaskKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Points {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
}

pub fn points(n: usize, dim: usize, seed: u64) -> Points {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y = x.iter().map(|r| u8::from(r[0] + 0.3 * rng.random_range(-1.0..1.0) > 0.0)).collect();
    Points { x, y }
}

/// Event times, event flags and a noisy risk score that tracks them.
pub fn survival(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0f64).floor()).collect();
    let events = (0..n).map(|_| rng.random_bool(0.7)).collect();
    let risk = times.iter().map(|t| -t + rng.random_range(-20.0..20.0)).collect();
    (times, events, risk)
}

pub fn table(rows: usize, numeric: usize) -> TabularDataset {
    let spec = CleanSpec { numeric, categorical: 2, ..CleanSpec::new(TaskKind::Classification, rows) };
    gen_clean(&spec, 1).expect("valid spec").0
}
