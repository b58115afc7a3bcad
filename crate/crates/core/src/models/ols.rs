//! Ordinary least squares through a QR factorization.

use nalgebra::{DMatrix, DVector};

use super::ModelError;

/// Solves min ||y - [1 X] β||. Returns (coefficients, intercept).
pub fn fit(x: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, f64), ModelError> {
    let n = x.len();
    let d = x.first().map_or(0, Vec::len);
    if n < d + 1 {
        return Err(ModelError::Singular);
    }
    let a = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let qr = a.qr();
    let r = qr.r();
    let max_diag = (0..=d).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..=d).any(|i| r[(i, i)].abs() <= 1e-10 * max_diag.max(1.0)) {
        return Err(ModelError::Singular);
    }
    let qty = qr.q().transpose() * DVector::from_column_slice(y);
    let beta = r.solve_upper_triangular(&qty).ok_or(ModelError::Singular)?;
    Ok((beta.iter().skip(1).copied().collect(), beta[0]))
}
