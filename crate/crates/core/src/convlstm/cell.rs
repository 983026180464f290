//! One ConvLSTM time step and its adjoint.
//!
//! Gate pre-activations are `z = W_x * x + W_h * h + b` where `*` is the
//! same-padded spatial convolution; gates are stacked `[i, f, g, o]` along the
//! channel axis so both convolutions run as a single `4·C_out`-channel kernel.
//! There are no peephole terms.

use crate::error::{ensure_finite, Error, Result};
use crate::numcore::activation::{sigmoid, tanh_fast};
use crate::numcore::conv::{conv_acc, conv_adjoint_acc};

use super::{GATES, KERNEL};

/// Borrowed weights of one ConvLSTM layer.
///
/// `wx` is `[4, C_out, C_in, 3]`, `wh` is `[4, C_out, C_out, 3]`, `b` is
/// `[4, C_out]`, all row-major with gate order `i, f, g, o`.
#[derive(Debug, Clone, Copy)]
pub struct ConvLstmLayer<'a> {
    pub c_in: usize,
    pub c_out: usize,
    pub wx: &'a [f64],
    pub wh: &'a [f64],
    pub b: &'a [f64],
}

impl ConvLstmLayer<'_> {
    pub fn param_count(c_in: usize, c_out: usize) -> usize {
        GATES * (KERNEL * c_in * c_out + KERNEL * c_out * c_out + c_out)
    }

    fn check(&self) -> Result<()> {
        let (ci, co) = (self.c_in, self.c_out);
        if self.wx.len() != GATES * co * ci * KERNEL
            || self.wh.len() != GATES * co * co * KERNEL
            || self.b.len() != GATES * co
        {
            return Err(Error::shape(format!(
                "layer {ci}->{co}: got wx {}, wh {}, b {}",
                self.wx.len(),
                self.wh.len(),
                self.b.len()
            )));
        }
        Ok(())
    }
}

/// Hidden and cell state, each `[C, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub channels: usize,
    pub spatial: usize,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(channels: usize, spatial: usize) -> Self {
        Self { channels, spatial, h: vec![0.0; channels * spatial], c: vec![0.0; channels * spatial] }
    }
}

/// Activations kept from a forward step for the backward pass.
#[derive(Debug, Clone, Default)]
pub(crate) struct StepTrace {
    /// Post-activation gates `[4, C, L]`.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

/// Forward step. `h_prev`/`c_prev` of `None` mean the zero state.
pub(crate) fn step_forward(
    layer: &ConvLstmLayer<'_>,
    spatial: usize,
    x: &[f64],
    h_prev: Option<&[f64]>,
    c_prev: Option<&[f64]>,
) -> StepTrace {
    let (c_in, c_out) = (layer.c_in, layer.c_out);
    let n = c_out * spatial;
    let mut z = vec![0.0; GATES * n];
    for (row, &b) in z.chunks_exact_mut(spatial).zip(layer.b) {
        row.fill(b);
    }
    conv_acc(x, c_in, spatial, layer.wx, GATES * c_out, KERNEL, &mut z);
    if let Some(h) = h_prev {
        conv_acc(h, c_out, spatial, layer.wh, GATES * c_out, KERNEL, &mut z);
    }
    let (zi, rest) = z.split_at_mut(n);
    let (zf, rest) = rest.split_at_mut(n);
    let (zg, zo) = rest.split_at_mut(n);
    zi.iter_mut().for_each(|v| *v = sigmoid(*v));
    zf.iter_mut().for_each(|v| *v = sigmoid(*v));
    zg.iter_mut().for_each(|v| *v = tanh_fast(*v));
    zo.iter_mut().for_each(|v| *v = sigmoid(*v));

    let mut c = vec![0.0; n];
    for k in 0..n {
        let carried = c_prev.map_or(0.0, |cp| zf[k] * cp[k]);
        c[k] = carried + zi[k] * zg[k];
    }
    let tanh_c: Vec<f64> = c.iter().map(|&v| tanh_fast(v)).collect();
    let h = zo.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();
    StepTrace { gates: z, c, tanh_c, h }
}

/// Gradients flowing out of one step's backward pass.
pub(crate) struct StepAdjoint {
    pub dx: Option<Vec<f64>>,
    pub dh_prev: Vec<f64>,
    pub dc_prev: Vec<f64>,
}

/// Backward step. `dh`/`dc` are the total gradients w.r.t. this step's
/// hidden and cell outputs. Weight gradients are accumulated into
/// `g_wx`, `g_wh`, `g_b`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn step_backward(
    layer: &ConvLstmLayer<'_>,
    spatial: usize,
    x: &[f64],
    h_prev: Option<&[f64]>,
    c_prev: Option<&[f64]>,
    trace: &StepTrace,
    dh: &[f64],
    dc_in: &[f64],
    want_dx: bool,
    g_wx: &mut [f64],
    g_wh: &mut [f64],
    g_b: &mut [f64],
) -> StepAdjoint {
    let (c_in, c_out) = (layer.c_in, layer.c_out);
    let n = c_out * spatial;
    let (gi, rest) = trace.gates.split_at(n);
    let (gf, rest) = rest.split_at(n);
    let (gg, go) = rest.split_at(n);

    let mut dz = vec![0.0; GATES * n];
    let mut dc_prev = vec![0.0; n];
    {
        let (dzi, rest) = dz.split_at_mut(n);
        let (dzf, rest) = rest.split_at_mut(n);
        let (dzg, dzo) = rest.split_at_mut(n);
        for k in 0..n {
            let tc = trace.tanh_c[k];
            let dc = dc_in[k] + dh[k] * go[k] * (1.0 - tc * tc);
            dzo[k] = dh[k] * tc * go[k] * (1.0 - go[k]);
            dzi[k] = dc * gg[k] * gi[k] * (1.0 - gi[k]);
            dzg[k] = dc * gi[k] * (1.0 - gg[k] * gg[k]);
            let cp = c_prev.map_or(0.0, |c| c[k]);
            dzf[k] = dc * cp * gf[k] * (1.0 - gf[k]);
            dc_prev[k] = dc * gf[k];
        }
    }
    for (gb, row) in g_b.iter_mut().zip(dz.chunks_exact(spatial)) {
        *gb += row.iter().sum::<f64>();
    }
    let mut dx = want_dx.then(|| vec![0.0; c_in * spatial]);
    conv_adjoint_acc(&dz, x, c_in, spatial, layer.wx, GATES * c_out, KERNEL, dx.as_deref_mut(), g_wx);
    let mut dh_prev = vec![0.0; n];
    if let Some(h) = h_prev {
        conv_adjoint_acc(&dz, h, c_out, spatial, layer.wh, GATES * c_out, KERNEL, Some(&mut dh_prev), g_wh);
    }
    StepAdjoint { dx, dh_prev, dc_prev }
}

/// Advances `state` by one input frame `x` (`[C_in, L]`).
pub fn cell_step(x: &[f64], state: &CellState, layer: &ConvLstmLayer<'_>) -> Result<CellState> {
    layer.check()?;
    let spatial = state.spatial;
    if state.channels != layer.c_out || state.h.len() != layer.c_out * spatial || state.c.len() != state.h.len() {
        return Err(Error::shape(format!(
            "state has {} channels x {spatial}, layer emits {}",
            state.channels, layer.c_out
        )));
    }
    if x.len() != layer.c_in * spatial {
        return Err(Error::shape(format!(
            "input has {} values, layer expects {}x{spatial}",
            x.len(),
            layer.c_in
        )));
    }
    ensure_finite(&state.h, "hidden state")?;
    ensure_finite(&state.c, "cell state")?;
    ensure_finite(x, "cell input")?;
    let trace = step_forward(layer, spatial, x, Some(&state.h), Some(&state.c));
    ensure_finite(&trace.c, "updated cell state")?;
    Ok(CellState { channels: layer.c_out, spatial, h: trace.h, c: trace.c })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::fdiff::{finite_difference_grad, max_relative_error};
    use crate::rng::RngStream;

    struct Owned {
        c_in: usize,
        c_out: usize,
        wx: Vec<f64>,
        wh: Vec<f64>,
        b: Vec<f64>,
    }

    impl Owned {
        fn random(c_in: usize, c_out: usize, rng: &mut RngStream) -> Self {
            let mut d = |n: usize| (0..n).map(|_| rng.uniform_range(-0.6, 0.6)).collect::<Vec<_>>();
            Self {
                c_in,
                c_out,
                wx: d(GATES * c_out * c_in * KERNEL),
                wh: d(GATES * c_out * c_out * KERNEL),
                b: d(GATES * c_out),
            }
        }
        fn view(&self) -> ConvLstmLayer<'_> {
            ConvLstmLayer { c_in: self.c_in, c_out: self.c_out, wx: &self.wx, wh: &self.wh, b: &self.b }
        }
    }

    #[test]
    fn zero_everything_stays_zero() {
        let wx = vec![0.0; GATES * 2 * 3 * KERNEL];
        let wh = vec![0.0; GATES * 2 * 2 * KERNEL];
        let b = vec![0.0; GATES * 2];
        let layer = ConvLstmLayer { c_in: 3, c_out: 2, wx: &wx, wh: &wh, b: &b };
        let trace = step_forward(&layer, 5, &[0.0; 15], None, None);
        let n = 10;
        assert!(trace.gates[..n].iter().all(|&v| v == 0.5)); // i
        assert!(trace.gates[n..2 * n].iter().all(|&v| v == 0.5)); // f
        assert!(trace.gates[2 * n..3 * n].iter().all(|&v| v == 0.0)); // g
        assert!(trace.gates[3 * n..].iter().all(|&v| v == 0.5)); // o
        let next = cell_step(&[0.0; 15], &CellState::zeros(2, 5), &layer).unwrap();
        assert!(next.c.iter().chain(&next.h).all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_forget_gate_carries_cell() {
        let mut rng = RngStream::new(3, 0);
        let mut p = Owned::random(1, 2, &mut rng);
        let spatial = 6;
        // Forget-gate biases sit in rows [C_out, 2 C_out).
        for v in &mut p.b[2..4] {
            *v = 60.0;
        }
        let state = CellState {
            channels: 2,
            spatial,
            h: (0..12).map(|k| 0.1 * k as f64 - 0.5).collect(),
            c: (0..12).map(|k| 0.2 * k as f64 - 1.0).collect(),
        };
        let x: Vec<f64> = (0..6).map(|k| (k as f64).sin()).collect();
        let trace = step_forward(&p.view(), spatial, &x, Some(&state.h), Some(&state.c));
        let n = 12;
        for k in 0..n {
            let ig = trace.gates[k] * trace.gates[2 * n + k];
            assert!((trace.c[k] - (state.c[k] + ig)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_mismatched_state() {
        let mut rng = RngStream::new(4, 0);
        let p = Owned::random(1, 2, &mut rng);
        assert!(cell_step(&[0.0; 5], &CellState::zeros(3, 5), &p.view()).is_err());
        assert!(cell_step(&[0.0; 4], &CellState::zeros(2, 5), &p.view()).is_err());
        let mut bad = CellState::zeros(2, 5);
        bad.c[0] = f64::NAN;
        assert!(matches!(cell_step(&[0.0; 5], &bad, &p.view()), Err(Error::NonFinite(_))));
    }

    /// Two chained steps, loss = Σ r ∘ h₂ + Σ s ∘ c₂; compare the analytic
    /// gradient w.r.t. every weight and the inputs against finite differences.
    #[test]
    fn bptt_through_two_steps_matches_finite_differences() {
        for seed in 0..5 {
            let mut rng = RngStream::new(seed, 99);
            let (c_in, c_out, spatial) = (2, 3, 7);
            let p = Owned::random(c_in, c_out, &mut rng);
            let mut d = |n: usize| (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect::<Vec<_>>();
            let x1 = d(c_in * spatial);
            let x2 = d(c_in * spatial);
            let r = d(c_out * spatial);
            let s = d(c_out * spatial);

            let loss_of = |wx: &[f64], wh: &[f64], b: &[f64], x1: &[f64]| {
                let layer = ConvLstmLayer { c_in, c_out, wx, wh, b };
                let t1 = step_forward(&layer, spatial, x1, None, None);
                let t2 = step_forward(&layer, spatial, &x2, Some(&t1.h), Some(&t1.c));
                t2.h.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>()
                    + t2.c.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>()
            };

            let layer = p.view();
            let t1 = step_forward(&layer, spatial, &x1, None, None);
            let t2 = step_forward(&layer, spatial, &x2, Some(&t1.h), Some(&t1.c));
            let mut gwx = vec![0.0; p.wx.len()];
            let mut gwh = vec![0.0; p.wh.len()];
            let mut gb = vec![0.0; p.b.len()];
            let a2 = step_backward(
                &layer, spatial, &x2, Some(&t1.h), Some(&t1.c), &t2, &r, &s, false, &mut gwx, &mut gwh,
                &mut gb,
            );
            let a1 = step_backward(
                &layer, spatial, &x1, None, None, &t1, &a2.dh_prev, &a2.dc_prev, true, &mut gwx,
                &mut gwh, &mut gb,
            );

            let h = 1e-5;
            let nwx = finite_difference_grad(|q| Ok(loss_of(q, &p.wh, &p.b, &x1)), &p.wx, h).unwrap();
            let nwh = finite_difference_grad(|q| Ok(loss_of(&p.wx, q, &p.b, &x1)), &p.wh, h).unwrap();
            let nb = finite_difference_grad(|q| Ok(loss_of(&p.wx, &p.wh, q, &x1)), &p.b, h).unwrap();
            let nx = finite_difference_grad(|q| Ok(loss_of(&p.wx, &p.wh, &p.b, q)), &x1, h).unwrap();
            for (name, a, n) in [("wx", &gwx, &nwx), ("wh", &gwh, &nwh), ("b", &gb, &nb)] {
                let e = max_relative_error(a, n);
                assert!(e < 1e-5, "seed {seed} {name}: {e}");
            }
            let e = max_relative_error(a1.dx.as_ref().unwrap(), &nx);
            assert!(e < 1e-5, "seed {seed} dx: {e}");
        }
    }
}
