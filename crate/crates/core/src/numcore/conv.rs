//! "Same"-padded 1-D convolution (cross-correlation) and its adjoint.
//!
//! Layouts are row-major: input `[C_in, L]`, kernels `[C_out, C_in, K]`,
//! output `[C_out, L]`. `K` must be odd; positions outside `[0, L)` read as 0.

use crate::error::{ensure_finite, Error, Result};

use super::Tensor;

/// Offset of kernel tap `j` relative to the output position.
#[inline]
fn tap_shift(j: usize, pad: usize) -> isize {
    j as isize - pad as isize
}

/// `dst[x] += w * src[x + shift]` over every `x` where both ends are in range.
#[inline]
fn axpy_shifted(dst: &mut [f64], src: &[f64], w: f64, shift: isize) {
    let len = dst.len();
    let s = shift.unsigned_abs();
    if s >= len {
        return;
    }
    if shift >= 0 {
        for (d, &v) in dst[..len - s].iter_mut().zip(&src[s..]) {
            *d += w * v;
        }
    } else {
        for (d, &v) in dst[s..].iter_mut().zip(&src[..len - s]) {
            *d += w * v;
        }
    }
}

/// `Σ_x a[x] * b[x + shift]` over the in-range positions.
#[inline]
fn dot_shifted(a: &[f64], b: &[f64], shift: isize) -> f64 {
    let len = a.len();
    let s = shift.unsigned_abs();
    if s >= len {
        return 0.0;
    }
    if shift >= 0 {
        a[..len - s].iter().zip(&b[s..]).map(|(x, y)| x * y).sum()
    } else {
        a[s..].iter().zip(&b[..len - s]).map(|(x, y)| x * y).sum()
    }
}

/// `out[x] += w0·src[x-1] + w1·src[x] + w2·src[x+1]` with zero padding.
#[inline]
fn conv3_row(out: &mut [f64], src: &[f64], w0: f64, w1: f64, w2: f64) {
    let len = out.len();
    match len {
        0 => {}
        1 => out[0] += w1 * src[0],
        _ => {
            out[0] += w1 * src[0] + w2 * src[1];
            out[len - 1] += w0 * src[len - 2] + w1 * src[len - 1];
            let inner = &mut out[1..len - 1];
            for (((o, &a), &b), &c) in inner.iter_mut().zip(&src[..len - 2]).zip(&src[1..len - 1]).zip(&src[2..]) {
                *o += w0 * a + w1 * b + w2 * c;
            }
        }
    }
}

/// Four-lane dot product (fixed association order, vectorizable).
#[inline]
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Accumulates the convolution of `input` with `kernels` into `out`.
pub(crate) fn conv_acc(
    input: &[f64],
    c_in: usize,
    len: usize,
    kernels: &[f64],
    c_out: usize,
    k: usize,
    out: &mut [f64],
) {
    debug_assert_eq!(input.len(), c_in * len);
    debug_assert_eq!(kernels.len(), c_out * c_in * k);
    debug_assert_eq!(out.len(), c_out * len);
    let pad = k / 2;
    for (o, out_row) in out.chunks_exact_mut(len).enumerate() {
        for (c, in_row) in input.chunks_exact(len).enumerate() {
            let taps = &kernels[(o * c_in + c) * k..(o * c_in + c + 1) * k];
            if k == 3 {
                conv3_row(out_row, in_row, taps[0], taps[1], taps[2]);
                continue;
            }
            for (j, &w) in taps.iter().enumerate() {
                axpy_shifted(out_row, in_row, w, tap_shift(j, pad));
            }
        }
    }
}

/// Adjoint of [`conv_acc`]: accumulates into `grad_input` and `grad_kernels`
/// given `upstream = ∂loss/∂out`. Bias gradients are left to the caller.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_adjoint_acc(
    upstream: &[f64],
    input: &[f64],
    c_in: usize,
    len: usize,
    kernels: &[f64],
    c_out: usize,
    k: usize,
    grad_input: Option<&mut [f64]>,
    grad_kernels: &mut [f64],
) {
    debug_assert_eq!(upstream.len(), c_out * len);
    debug_assert_eq!(grad_kernels.len(), c_out * c_in * k);
    let pad = k / 2;
    for (o, up_row) in upstream.chunks_exact(len).enumerate() {
        for (c, in_row) in input.chunks_exact(len).enumerate() {
            let base = (o * c_in + c) * k;
            if k == 3 && len >= 2 {
                grad_kernels[base] += dot4(&up_row[1..], &in_row[..len - 1]);
                grad_kernels[base + 1] += dot4(up_row, in_row);
                grad_kernels[base + 2] += dot4(&up_row[..len - 1], &in_row[1..]);
                continue;
            }
            for j in 0..k {
                grad_kernels[base + j] += dot_shifted(up_row, in_row, tap_shift(j, pad));
            }
        }
    }
    if let Some(grad_input) = grad_input {
        for (o, up_row) in upstream.chunks_exact(len).enumerate() {
            for (c, gin_row) in grad_input.chunks_exact_mut(len).enumerate() {
                let taps = &kernels[(o * c_in + c) * k..(o * c_in + c + 1) * k];
                if k == 3 {
                    conv3_row(gin_row, up_row, taps[2], taps[1], taps[0]);
                    continue;
                }
                for (j, &w) in taps.iter().enumerate() {
                    // out[x] reads in[x + s], so in[y] feeds out[y - s].
                    axpy_shifted(gin_row, up_row, w, -tap_shift(j, pad));
                }
            }
        }
    }
}

fn check_conv_shapes(input: &Tensor, kernels: &Tensor) -> Result<(usize, usize, usize, usize)> {
    input.expect_rank(2, "conv input")?;
    kernels.expect_rank(3, "conv kernels")?;
    let (c_in, len) = (input.shape()[0], input.shape()[1]);
    let (c_out, kc_in, k) = (kernels.shape()[0], kernels.shape()[1], kernels.shape()[2]);
    if kc_in != c_in {
        return Err(Error::shape(format!(
            "kernels expect {kc_in} input channels, input has {c_in}"
        )));
    }
    if k % 2 == 0 {
        return Err(Error::shape(format!("kernel size {k} must be odd")));
    }
    Ok((c_in, len, c_out, k))
}

/// Zero-padded convolution preserving the spatial length.
pub fn conv1d_same(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (c_in, len, c_out, k) = check_conv_shapes(input, kernels)?;
    bias.expect_shape(&[c_out], "conv bias")?;
    let mut out = vec![0.0; c_out * len];
    for (row, &b) in out.chunks_exact_mut(len.max(1)).zip(bias.data()) {
        row.fill(b);
    }
    conv_acc(input.data(), c_in, len, kernels.data(), c_out, k, &mut out);
    ensure_finite(&out, "conv output")?;
    Tensor::new(vec![c_out, len], out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Tensor,
}

/// Gradients of a scalar loss through [`conv1d_same`] given `∂loss/∂out`.
pub fn conv1d_same_grad(upstream: &Tensor, input: &Tensor, kernels: &Tensor) -> Result<ConvGrads> {
    let (c_in, len, c_out, k) = check_conv_shapes(input, kernels)?;
    upstream.expect_shape(&[c_out, len], "conv upstream")?;
    let mut gin = vec![0.0; c_in * len];
    let mut gk = vec![0.0; c_out * c_in * k];
    conv_adjoint_acc(
        upstream.data(),
        input.data(),
        c_in,
        len,
        kernels.data(),
        c_out,
        k,
        Some(&mut gin),
        &mut gk,
    );
    let gb = upstream.data().chunks_exact(len.max(1)).map(|r| r.iter().sum()).collect();
    Ok(ConvGrads {
        input: Tensor::new(vec![c_in, len], gin)?,
        kernels: Tensor::new(vec![c_out, c_in, k], gk)?,
        bias: Tensor::new(vec![c_out], gb)?,
    })
}
