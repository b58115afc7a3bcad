//! Cox proportional hazards: Breslow partial likelihood and gradient ascent.

use super::logistic::linear;
use super::ModelError;

/// Breslow partial log-likelihood: for every event i,
/// x_i·β − log Σ_{t_j ≥ t_i} exp(x_j·β).
pub fn partial_loglik(x: &[Vec<f64>], times: &[f64], events: &[bool], beta: &[f64]) -> f64 {
    let eta: Vec<f64> = x.iter().map(|r| linear(r, beta, 0.0)).collect();
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let order = by_time_desc(times);
    let mut ll = 0.0;
    let mut risk = 0.0;
    let mut k = 0;
    while k < order.len() {
        let t = times[order[k]];
        let mut end = k;
        while end < order.len() && times[order[end]] == t {
            risk += (eta[order[end]] - shift).exp();
            end += 1;
        }
        for &i in &order[k..end] {
            if events[i] {
                ll += eta[i] - (risk.ln() + shift);
            }
        }
        k = end;
    }
    ll
}

/// Gradient of [`partial_loglik`] with respect to β.
pub fn gradient(x: &[Vec<f64>], times: &[f64], events: &[bool], beta: &[f64]) -> Vec<f64> {
    let d = beta.len();
    let eta: Vec<f64> = x.iter().map(|r| linear(r, beta, 0.0)).collect();
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let order = by_time_desc(times);
    let mut g = vec![0.0; d];
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; d];
    let mut k = 0;
    while k < order.len() {
        let t = times[order[k]];
        let mut end = k;
        while end < order.len() && times[order[end]] == t {
            let i = order[end];
            let w = (eta[i] - shift).exp();
            s0 += w;
            for (a, v) in s1.iter_mut().zip(&x[i]) {
                *a += w * v;
            }
            end += 1;
        }
        for &i in &order[k..end] {
            if events[i] {
                for j in 0..d {
                    g[j] += x[i][j] - s1[j] / s0;
                }
            }
        }
        k = end;
    }
    g
}

fn by_time_desc(times: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]).then(a.cmp(&b)));
    order
}

/// Fixed-budget gradient ascent from β = 0; the step is scaled by the event count.
pub fn fit(x: &[Vec<f64>], times: &[f64], events: &[bool], epochs: usize, lr: f64) -> Result<Vec<f64>, ModelError> {
    let n_events = events.iter().filter(|&&e| e).count();
    if n_events == 0 {
        return Err(ModelError::NoEvents);
    }
    let d = x.first().map_or(0, Vec::len);
    let mut beta = vec![0.0; d];
    for _ in 0..epochs {
        let g = gradient(x, times, events, &beta);
        for (b, gj) in beta.iter_mut().zip(&g) {
            *b += lr * gj / n_events as f64;
        }
    }
    Ok(beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tied_event_times_share_the_risk_set() {
        // Two tied events at t=1 and a censored subject at t=2, β = 0:
        // each event contributes -log 3.
        let x = vec![vec![0.0], vec![0.0], vec![0.0]];
        let ll = partial_loglik(&x, &[1.0, 1.0, 2.0], &[true, true, false], &[0.0]);
        assert!((ll + 2.0 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn no_events_is_an_error() {
        assert_eq!(fit(&[vec![1.0]], &[1.0], &[false], 10, 0.1), Err(ModelError::NoEvents));
    }
}
