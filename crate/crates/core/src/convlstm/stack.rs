use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::numcore::dense::{dense_adjoint_acc, dense_into};
use crate::numcore::dropout::{check_rate, dropout_mask};
use crate::numcore::{glorot_limit, Tensor};
use crate::rng::RngStream;

use super::cell::{step_backward, step_forward, ConvLstmLayer, StepTrace};
use super::{count_params_for_plan, DEFAULT_CHANNELS, DEFAULT_DROPOUT, GATES, KERNEL, SPATIAL_POINTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackConfig {
    /// Number of past phases read per prediction.
    pub resolution: usize,
    /// Channel plan, input channel first.
    pub channels: Vec<usize>,
    pub spatial: usize,
    pub dropout: f64,
}

impl StackConfig {
    pub fn new(resolution: usize, channels: Vec<usize>) -> Self {
        Self { resolution, channels, spatial: SPATIAL_POINTS, dropout: DEFAULT_DROPOUT }
    }

    /// Full-size model: 1→128→64→32→8 over 100 points.
    pub fn full(resolution: usize) -> Self {
        Self::new(resolution, DEFAULT_CHANNELS.to_vec())
    }

    pub fn param_count(&self) -> usize {
        count_params_for_plan(&self.channels, self.spatial)
    }

    fn validate(&self) -> Result<()> {
        if self.resolution == 0 {
            return Err(Error::invalid("resolution must be at least 1"));
        }
        if self.channels.len() < 2 || self.channels.contains(&0) {
            return Err(Error::invalid(format!("bad channel plan {:?}", self.channels)));
        }
        if self.spatial == 0 {
            return Err(Error::invalid("spatial length must be positive"));
        }
        check_rate(self.dropout)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LayerLayout {
    c_in: usize,
    c_out: usize,
    offset: usize,
}

impl LayerLayout {
    fn wx_len(&self) -> usize {
        GATES * self.c_out * self.c_in * KERNEL
    }
    fn wh_len(&self) -> usize {
        GATES * self.c_out * self.c_out * KERNEL
    }
    fn b_len(&self) -> usize {
        GATES * self.c_out
    }
    fn len(&self) -> usize {
        self.wx_len() + self.wh_len() + self.b_len()
    }
}

/// Per-layer, per-time-step inverted-dropout multipliers on hidden outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks(Vec<Vec<Vec<f64>>>);

/// A ConvLSTM stack with its dense head.
///
/// All trainable values live in one flat vector laid out as
/// `[layer0.wx, layer0.wh, layer0.b, layer1.wx, ..., head.w, head.b]`, which is
/// also the layout of gradients. `scale` is a fixed, non-trainable unit: inputs
/// are divided by it and head outputs multiplied by it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLstmStack {
    config: StackConfig,
    layers: Vec<LayerLayout>,
    head_offset: usize,
    params: Vec<f64>,
    scale: f64,
}

struct LayerTrace {
    steps: Vec<StepTrace>,
    /// Outputs after dropout; `None` when no masks were applied.
    dropped: Option<Vec<Vec<f64>>>,
}

impl LayerTrace {
    fn output(&self, t: usize) -> &[f64] {
        match &self.dropped {
            Some(d) => &d[t],
            None => &self.steps[t].h,
        }
    }
}

struct Forward {
    input: Vec<f64>,
    layers: Vec<LayerTrace>,
    prediction: Vec<f64>,
}

impl ConvLstmStack {
    /// All parameters zero.
    pub fn zeros(config: StackConfig) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::new();
        let mut offset = 0;
        for w in config.channels.windows(2) {
            let l = LayerLayout { c_in: w[0], c_out: w[1], offset };
            offset += l.len();
            layers.push(l);
        }
        let head_offset = offset;
        let flat = config.spatial * config.channels[config.channels.len() - 1];
        let total = head_offset + (flat + 1) * config.spatial;
        debug_assert_eq!(total, config.param_count());
        Ok(Self { config, layers, head_offset, params: vec![0.0; total], scale: 1.0 })
    }

    /// Glorot-uniform kernels, zero biases except forget gates at +1.
    pub fn init(config: StackConfig, rng: &mut RngStream) -> Result<Self> {
        let mut s = Self::zeros(config)?;
        let layers = s.layers.clone();
        for l in &layers {
            let (ci, co) = (l.c_in, l.c_out);
            let lim_x = glorot_limit(KERNEL * ci, KERNEL * GATES * co);
            let lim_h = glorot_limit(KERNEL * co, KERNEL * GATES * co);
            let p = &mut s.params[l.offset..l.offset + l.len()];
            let (wx, rest) = p.split_at_mut(l.wx_len());
            let (wh, b) = rest.split_at_mut(l.wh_len());
            wx.iter_mut().for_each(|v| *v = rng.uniform_range(-lim_x, lim_x));
            wh.iter_mut().for_each(|v| *v = rng.uniform_range(-lim_h, lim_h));
            b[co..2 * co].fill(1.0);
        }
        let spatial = s.config.spatial;
        let flat = s.flat_len();
        let lim = glorot_limit(flat, spatial);
        let head = s.head_offset;
        s.params[head..head + flat * spatial]
            .iter_mut()
            .for_each(|v| *v = rng.uniform_range(-lim, lim));
        Ok(s)
    }

    /// Rebuilds a stack from a flat parameter vector in canonical layout.
    pub fn from_params(config: StackConfig, params: Vec<f64>, scale: f64) -> Result<Self> {
        let mut s = Self::zeros(config)?;
        if params.len() != s.params.len() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                s.params.len(),
                params.len()
            )));
        }
        ensure_finite(&params, "parameters")?;
        s.params = params;
        s.set_scale(scale)?;
        Ok(s)
    }

    pub fn config(&self) -> &StackConfig {
        &self.config
    }

    pub fn resolution(&self) -> usize {
        self.config.resolution
    }

    pub fn spatial(&self) -> usize {
        self.config.spatial
    }

    pub fn count_params(&self) -> usize {
        self.params.len()
    }

    pub fn head_param_count(&self) -> usize {
        self.params.len() - self.head_offset
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn set_scale(&mut self, scale: f64) -> Result<()> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid(format!("scale must be positive, got {scale}")));
        }
        self.scale = scale;
        Ok(())
    }

    /// Sets the unit scale to the RMS of the given target profiles.
    pub fn fit_scale<'a>(&mut self, targets: impl IntoIterator<Item = &'a [f64]>) -> Result<()> {
        let (mut sum, mut n) = (0.0, 0usize);
        for t in targets {
            sum += t.iter().map(|v| v * v).sum::<f64>();
            n += t.len();
        }
        let rms = if n == 0 { 0.0 } else { (sum / n as f64).sqrt() };
        self.set_scale(if rms > 0.0 { rms } else { 1.0 })
    }

    /// Named tensors in canonical order, for persistence.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let p = &self.params[l.offset..l.offset + l.len()];
            let (wx, rest) = p.split_at(l.wx_len());
            let (wh, b) = rest.split_at(l.wh_len());
            out.push((format!("layer{i}.wx"), vec![GATES, l.c_out, l.c_in, KERNEL], wx));
            out.push((format!("layer{i}.wh"), vec![GATES, l.c_out, l.c_out, KERNEL], wh));
            out.push((format!("layer{i}.b"), vec![GATES, l.c_out], b));
        }
        let spatial = self.config.spatial;
        let flat = self.flat_len();
        let (w, b) = self.params[self.head_offset..].split_at(flat * spatial);
        out.push(("head.w".into(), vec![spatial, flat], w));
        out.push(("head.b".into(), vec![spatial], b));
        out
    }

    pub fn layer(&self, index: usize) -> Option<ConvLstmLayer<'_>> {
        let l = self.layers.get(index)?;
        let p = &self.params[l.offset..l.offset + l.len()];
        let (wx, rest) = p.split_at(l.wx_len());
        let (wh, b) = rest.split_at(l.wh_len());
        Some(ConvLstmLayer { c_in: l.c_in, c_out: l.c_out, wx, wh, b })
    }

    fn flat_len(&self) -> usize {
        self.config.spatial * self.layers.last().map_or(0, |l| l.c_out)
    }

    pub fn sample_masks(&self, rng: &mut RngStream) -> DropoutMasks {
        let (t, spatial, rate) = (self.config.resolution, self.config.spatial, self.config.dropout);
        DropoutMasks(
            self.layers
                .iter()
                .map(|l| (0..t).map(|_| dropout_mask(l.c_out * spatial, rate, rng)).collect())
                .collect(),
        )
    }

    fn check_window(&self, window: &[f64]) -> Result<()> {
        let need = self.config.resolution * self.config.spatial;
        if window.len() != need {
            return Err(Error::shape(format!(
                "window holds {} values, model reads {} phases x {} points",
                window.len(),
                self.config.resolution,
                self.config.spatial
            )));
        }
        ensure_finite(window, "input window")
    }

    fn run(&self, window: &[f64], masks: Option<&DropoutMasks>) -> Forward {
        let (steps, spatial) = (self.config.resolution, self.config.spatial);
        let input: Vec<f64> = window.iter().map(|v| v / self.scale).collect();
        let mut traces: Vec<LayerTrace> = Vec::with_capacity(self.layers.len());
        for (li, _) in self.layers.iter().enumerate() {
            let layer = self.layer(li).expect("layer index in range");
            let mut trace = LayerTrace { steps: Vec::with_capacity(steps), dropped: None };
            for t in 0..steps {
                let x = match traces.last() {
                    Some(prev) => prev.output(t),
                    None => &input[t * spatial..(t + 1) * spatial],
                };
                let prev = trace.steps.last();
                let st = step_forward(
                    &layer,
                    spatial,
                    x,
                    prev.map(|p| p.h.as_slice()),
                    prev.map(|p| p.c.as_slice()),
                );
                trace.steps.push(st);
            }
            if let Some(m) = masks {
                trace.dropped = Some(
                    trace
                        .steps
                        .iter()
                        .zip(&m.0[li])
                        .map(|(s, mask)| s.h.iter().zip(mask).map(|(h, k)| h * k).collect())
                        .collect(),
                );
            }
            traces.push(trace);
        }
        let flat = traces.last().expect("at least one layer").output(steps - 1);
        let spatial_out = self.config.spatial;
        let (w, b) = self.params[self.head_offset..].split_at(flat.len() * spatial_out);
        let mut prediction = vec![0.0; spatial_out];
        dense_into(flat, w, b, &mut prediction);
        prediction.iter_mut().for_each(|v| *v *= self.scale);
        Forward { input, layers: traces, prediction }
    }

    /// Accumulates `∂loss/∂params` into `grad` given `dy = ∂loss/∂prediction`.
    fn backward(&self, fwd: &Forward, masks: Option<&DropoutMasks>, dy: &[f64], grad: &mut [f64]) {
        let (steps, spatial) = (self.config.resolution, self.config.spatial);
        let top = self.layers.len() - 1;
        let flat = fwd.layers[top].output(steps - 1);

        let dhead: Vec<f64> = dy.iter().map(|g| g * self.scale).collect();
        let mut dflat = vec![0.0; flat.len()];
        {
            let (gw, gb) = grad[self.head_offset..].split_at_mut(flat.len() * spatial);
            let w = &self.params[self.head_offset..self.head_offset + flat.len() * spatial];
            dense_adjoint_acc(&dhead, flat, w, gw, gb, Some(&mut dflat));
        }

        // Gradient w.r.t. each layer's (dropped) output sequence.
        let mut d_out: Vec<Option<Vec<f64>>> = vec![None; steps];
        d_out[steps - 1] = Some(dflat);
        for li in (0..=top).rev() {
            let l = &self.layers[li];
            let layer = self.layer(li).expect("layer index in range");
            let n = l.c_out * spatial;
            let (gwx, rest) = grad[l.offset..l.offset + l.len()].split_at_mut(l.wx_len());
            let (gwh, gb) = rest.split_at_mut(l.wh_len());
            let trace = &fwd.layers[li];
            let mut dh_next = vec![0.0; n];
            let mut dc_next = vec![0.0; n];
            let mut d_below: Vec<Option<Vec<f64>>> = vec![None; steps];
            for t in (0..steps).rev() {
                let mut dh = dh_next;
                if let Some(up) = &d_out[t] {
                    match masks {
                        Some(m) => {
                            for ((d, u), k) in dh.iter_mut().zip(up).zip(&m.0[li][t]) {
                                *d += u * k;
                            }
                        }
                        None => dh.iter_mut().zip(up).for_each(|(d, u)| *d += u),
                    }
                }
                let x = if li == 0 {
                    &fwd.input[t * spatial..(t + 1) * spatial]
                } else {
                    fwd.layers[li - 1].output(t)
                };
                let prev = t.checked_sub(1).map(|p| &trace.steps[p]);
                let adj = step_backward(
                    &layer,
                    spatial,
                    x,
                    prev.map(|p| p.h.as_slice()),
                    prev.map(|p| p.c.as_slice()),
                    &trace.steps[t],
                    &dh,
                    &dc_next,
                    li > 0,
                    gwx,
                    gwh,
                    gb,
                );
                dh_next = adj.dh_prev;
                dc_next = adj.dc_prev;
                d_below[t] = adj.dx;
            }
            d_out = d_below;
        }
    }

    /// Forward pass on a `[t, L, 1]` (or `[t, L]`) window. In training mode a
    /// fresh dropout mask is drawn from `rng`; otherwise `rng` is untouched.
    pub fn forward(&self, window: &Tensor, training: bool, rng: &mut RngStream) -> Result<Tensor> {
        let (t, l) = (self.config.resolution, self.config.spatial);
        let ok = match window.shape() {
            [a, b] => *a == t && *b == l,
            [a, b, 1] => *a == t && *b == l,
            _ => false,
        };
        if !ok {
            return Err(Error::shape(format!(
                "window shape {:?}, model expects [{t}, {l}, 1]",
                window.shape()
            )));
        }
        let masks = (training && self.config.dropout > 0.0).then(|| self.sample_masks(rng));
        let fwd = self.run(window.data(), masks.as_ref());
        ensure_finite(&fwd.prediction, "prediction")?;
        Tensor::from_vec(fwd.prediction)
    }

    /// Inference on a flat `t·L` window (phases in order, oldest first).
    pub fn predict(&self, window: &[f64]) -> Result<Vec<f64>> {
        self.check_window(window)?;
        let fwd = self.run(window, None);
        ensure_finite(&fwd.prediction, "prediction")?;
        Ok(fwd.prediction)
    }

    /// MSE of one sample; `masks` selects training-mode dropout.
    pub fn loss(&self, window: &[f64], target: &[f64], masks: Option<&DropoutMasks>) -> Result<f64> {
        self.check_window(window)?;
        let fwd = self.run(window, masks);
        Ok(crate::numcore::loss::mse_slice(&fwd.prediction, target))
    }

    /// MSE of one sample, with its gradient accumulated into `grad`.
    pub fn loss_and_grad(
        &self,
        window: &[f64],
        target: &[f64],
        masks: Option<&DropoutMasks>,
        grad: &mut [f64],
    ) -> Result<f64> {
        self.check_window(window)?;
        if target.len() != self.config.spatial || grad.len() != self.params.len() {
            return Err(Error::shape("target or gradient buffer has the wrong length"));
        }
        let fwd = self.run(window, masks);
        let n = target.len() as f64;
        let dy: Vec<f64> = fwd.prediction.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
        self.backward(&fwd, masks, &dy, grad);
        Ok(crate::numcore::loss::mse_slice(&fwd.prediction, target))
    }
}
