//! Full-batch gradient-descent logistic regression on standardized inputs.

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn linear(x: &[f64], w: &[f64], b: f64) -> f64 {
    x.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b
}

/// Binary logistic regression from zero weights. `on_epoch` sees the
/// parameters after each epoch (1-based).
pub fn train_binary(
    x: &[Vec<f64>],
    y: &[f64],
    epochs: usize,
    lr: f64,
    mut on_epoch: impl FnMut(usize, &[f64], f64),
) -> (Vec<f64>, f64) {
    let d = x.first().map_or(0, Vec::len);
    let n = x.len().max(1) as f64;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut gw = vec![0.0; d];
    for epoch in 1..=epochs {
        gw.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (xi, &yi) in x.iter().zip(y) {
            let err = sigmoid(linear(xi, &w, b)) - yi;
            for (g, v) in gw.iter_mut().zip(xi) {
                *g += err * v;
            }
            gb += err;
        }
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj -= lr * g / n;
        }
        b -= lr * gb / n;
        on_epoch(epoch, &w, b);
    }
    (w, b)
}
