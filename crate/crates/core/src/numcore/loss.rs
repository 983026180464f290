use crate::error::Result;

use super::Tensor;

pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    target.expect_shape(pred.shape(), "mse target")?;
    Ok(mse_slice(pred.data(), target.data()))
}

pub fn mse_grad(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    target.expect_shape(pred.shape(), "mse target")?;
    let n = pred.len() as f64;
    Tensor::new(
        pred.shape().to_vec(),
        pred.data().iter().zip(target.data()).map(|(p, t)| 2.0 * (p - t) / n).collect(),
    )
}

#[inline]
pub(crate) fn mse_slice(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64
}
