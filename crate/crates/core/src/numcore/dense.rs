use crate::error::{ensure_finite, Error, Result};

use super::Tensor;

/// Trainable parameters of a fully connected `d_in -> d_out` layer.
pub const fn dense_param_count(d_in: usize, d_out: usize) -> usize {
    (d_in + 1) * d_out
}

/// `out = W x + b` with `W` row-major `[d_out, d_in]`.
#[inline]
pub(crate) fn dense_into(x: &[f64], w: &[f64], b: &[f64], out: &mut [f64]) {
    let d_in = x.len();
    for ((o, row), &bias) in out.iter_mut().zip(w.chunks_exact(d_in)).zip(b) {
        *o = bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Accumulates `∂W += g xᵀ`, `∂b += g` and (optionally) `∂x += Wᵀ g`.
#[inline]
pub(crate) fn dense_adjoint_acc(
    upstream: &[f64],
    x: &[f64],
    w: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    grad_x: Option<&mut [f64]>,
) {
    let d_in = x.len();
    for ((&g, gw_row), gb) in upstream.iter().zip(grad_w.chunks_exact_mut(d_in)).zip(grad_b) {
        *gb += g;
        if g != 0.0 {
            for (gw, &xi) in gw_row.iter_mut().zip(x) {
                *gw += g * xi;
            }
        }
    }
    if let Some(gx) = grad_x {
        for (&g, row) in upstream.iter().zip(w.chunks_exact(d_in)) {
            if g != 0.0 {
                for (gxi, &wi) in gx.iter_mut().zip(row) {
                    *gxi += g * wi;
                }
            }
        }
    }
}

fn check(x: &Tensor, w: &Tensor) -> Result<(usize, usize)> {
    x.expect_rank(1, "dense input")?;
    w.expect_rank(2, "dense weights")?;
    let (d_out, d_in) = (w.shape()[0], w.shape()[1]);
    if x.len() != d_in {
        return Err(Error::shape(format!(
            "dense weights expect {d_in} inputs, got {}",
            x.len()
        )));
    }
    Ok((d_in, d_out))
}

pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (_, d_out) = check(x, w)?;
    b.expect_shape(&[d_out], "dense bias")?;
    let mut out = vec![0.0; d_out];
    dense_into(x.data(), w.data(), b.data(), &mut out);
    ensure_finite(&out, "dense output")?;
    Tensor::from_vec(out)
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub fn dense_grad(upstream: &Tensor, x: &Tensor, w: &Tensor) -> Result<DenseGrads> {
    let (d_in, d_out) = check(x, w)?;
    upstream.expect_shape(&[d_out], "dense upstream")?;
    let mut gw = vec![0.0; d_in * d_out];
    let mut gb = vec![0.0; d_out];
    let mut gx = vec![0.0; d_in];
    dense_adjoint_acc(upstream.data(), x.data(), w.data(), &mut gw, &mut gb, Some(&mut gx));
    Ok(DenseGrads {
        input: Tensor::from_vec(gx)?,
        weights: Tensor::new(vec![d_out, d_in], gw)?,
        bias: Tensor::from_vec(gb)?,
    })
}
