//! Central finite differences, the oracle every analytic gradient is
//! checked against.

use crate::error::Result;

/// `(loss(p + h e_i) - loss(p - h e_i)) / 2h` for every coordinate `i`.
pub fn finite_difference_grad<F>(mut loss: F, params: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = loss(&probe)?;
        probe[i] = orig - step;
        let down = loss(&probe)?;
        probe[i] = orig;
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}

/// Gradient magnitude below which errors are measured absolutely. Central
/// differences at `h = 1e-5` on an O(1) loss carry roughly `ε·|f|/h ≈ 1e-11`
/// of rounding noise, which is meaningless relative to a 1e-8 gradient.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Largest elementwise `|a - b| / max(|a|, |b|, RELATIVE_ERROR_FLOOR)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(RELATIVE_ERROR_FLOOR))
        .fold(0.0, f64::max)
}
