//! Fully connected meta-learner over the three base predictions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convlstm::EpochRecord;
use crate::error::{ensure_finite, Error, Result};
use crate::numcore::dense::{dense_adjoint_acc, dense_into};
use crate::numcore::dropout::{check_rate, dropout_mask};
use crate::numcore::{adam_update, dense_param_count, glorot_limit, AdamConfig, AdamState};
use crate::rng::{purpose, RngStream};

/// Base models feeding the meta-learner.
pub const META_INPUTS: usize = 3;
/// Full-size unit plan, inputs first.
pub const DEFAULT_META_PLAN: [usize; 10] = [3, 512, 512, 256, 256, 128, 128, 64, 64, 1];
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.3;

const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    /// Units per layer, inputs first and a single output last.
    pub plan: Vec<usize>,
    pub dropout: f64,
    pub leaky_slope: f64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self { plan: DEFAULT_META_PLAN.to_vec(), dropout: 0.5, leaky_slope: DEFAULT_LEAKY_SLOPE }
    }
}

impl MetaConfig {
    pub fn with_plan(plan: Vec<usize>) -> Self {
        Self { plan, ..Self::default() }
    }

    pub fn param_count(&self) -> usize {
        count_meta_params(&self.plan)
    }

    fn validate(&self) -> Result<()> {
        if self.plan.len() < 2 || self.plan.contains(&0) {
            return Err(Error::invalid(format!("bad meta plan {:?}", self.plan)));
        }
        if self.plan[0] != META_INPUTS || self.plan[self.plan.len() - 1] != 1 {
            return Err(Error::invalid(format!(
                "meta plan must start at {META_INPUTS} inputs and end at 1 output, got {:?}",
                self.plan
            )));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(Error::invalid("leaky slope must be non-negative"));
        }
        check_rate(self.dropout)
    }
}

pub fn count_meta_params(plan: &[usize]) -> usize {
    plan.windows(2).map(|w| dense_param_count(w[0], w[1])).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaNet {
    config: MetaConfig,
    /// Per layer: weights `[out, in]` row-major, then biases.
    params: Vec<f64>,
    offsets: Vec<usize>,
    /// Inputs are divided by and the output multiplied by this.
    scale: f64,
}

struct Trace {
    /// Layer inputs after dropout, `acts[0]` is the scaled input.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<f64>>,
}

impl MetaNet {
    pub fn zeros(config: MetaConfig) -> Result<Self> {
        config.validate()?;
        let mut offsets = Vec::with_capacity(config.plan.len());
        let mut off = 0;
        for w in config.plan.windows(2) {
            offsets.push(off);
            off += dense_param_count(w[0], w[1]);
        }
        Ok(Self { params: vec![0.0; off], offsets, config, scale: 1.0 })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(config: MetaConfig, rng: &mut RngStream) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        for l in 0..net.offsets.len() {
            let (d_in, d_out) = (net.config.plan[l], net.config.plan[l + 1]);
            let limit = glorot_limit(d_in, d_out);
            let off = net.offsets[l];
            for w in &mut net.params[off..off + d_in * d_out] {
                *w = rng.uniform_range(-limit, limit);
            }
        }
        Ok(net)
    }

    pub fn from_params(config: MetaConfig, params: Vec<f64>, scale: f64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        if params.len() != net.params.len() {
            return Err(Error::shape(format!(
                "{} parameters for a meta plan of {}",
                params.len(),
                net.params.len()
            )));
        }
        ensure_finite(&params, "meta parameters")?;
        net.params = params;
        net.set_scale(scale)?;
        Ok(net)
    }

    pub fn config(&self) -> &MetaConfig {
        &self.config
    }

    pub fn count_params(&self) -> usize {
        self.params.len()
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

    /// Sets the unit scale to the RMS of the targets.
    pub fn fit_scale(&mut self, targets: impl IntoIterator<Item = f64>) -> Result<()> {
        let (mut sum, mut n) = (0.0, 0usize);
        for y in targets {
            sum += y * y;
            n += 1;
        }
        let rms = if n == 0 { 0.0 } else { (sum / n as f64).sqrt() };
        self.set_scale(if rms > 0.0 { rms } else { 1.0 })
    }

    /// Named tensors in canonical order, for persistence.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (l, &off) in self.offsets.iter().enumerate() {
            let (d_in, d_out) = (self.config.plan[l], self.config.plan[l + 1]);
            out.push((format!("dense{l}.w"), vec![d_out, d_in], &self.params[off..off + d_in * d_out]));
            out.push((
                format!("dense{l}.b"),
                vec![d_out],
                &self.params[off + d_in * d_out..off + d_in * d_out + d_out],
            ));
        }
        out
    }

    fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (d_in, d_out) = (self.config.plan[l], self.config.plan[l + 1]);
        let off = self.offsets[l];
        let (w, b) = self.params[off..off + (d_in + 1) * d_out].split_at(d_in * d_out);
        (w, b)
    }

    fn leaky(&self, z: f64) -> f64 {
        if z > 0.0 {
            z
        } else {
            self.config.leaky_slope * z
        }
    }

    fn run(&self, x: &[f64; META_INPUTS], masks: Option<&[Vec<f64>]>) -> Trace {
        let layers = self.offsets.len();
        let mut acts = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        acts.push(x.iter().map(|v| v / self.scale).collect::<Vec<_>>());
        for l in 0..layers {
            let (w, b) = self.layer(l);
            let mut z = vec![0.0; self.config.plan[l + 1]];
            dense_into(&acts[l], w, b, &mut z);
            if l + 1 < layers {
                let mut a: Vec<f64> = z.iter().map(|&v| self.leaky(v)).collect();
                if let Some(m) = masks {
                    a.iter_mut().zip(&m[l]).for_each(|(a, m)| *a *= m);
                }
                acts.push(a);
            }
            pre.push(z);
        }
        Trace { acts, pre }
    }

    /// Inference-mode output for one input triple.
    pub fn predict(&self, x: &[f64; META_INPUTS]) -> f64 {
        let trace = self.run(x, None);
        self.scale * trace.pre[trace.pre.len() - 1][0]
    }

    /// Inference over many triples, in order.
    pub fn predict_many(&self, xs: &[[f64; META_INPUTS]]) -> Result<Vec<f64>> {
        let out: Vec<f64> = xs
            .par_chunks(CHUNK)
            .flat_map_iter(|c| c.iter().map(|x| self.predict(x)))
            .collect();
        ensure_finite(&out, "meta prediction")?;
        Ok(out)
    }

    /// One inverted-dropout mask per hidden layer.
    pub fn sample_masks(&self, rng: &mut RngStream) -> Vec<Vec<f64>> {
        let hidden = &self.config.plan[1..self.config.plan.len() - 1];
        hidden.iter().map(|&n| dropout_mask(n, self.config.dropout, rng)).collect()
    }

    pub fn loss(&self, x: &[f64; META_INPUTS], y: f64, masks: Option<&[Vec<f64>]>) -> f64 {
        let trace = self.run(x, masks);
        let f = self.scale * trace.pre[trace.pre.len() - 1][0];
        (f - y) * (f - y)
    }

    /// Squared error of one sample, with its gradient added into `grad`.
    pub fn loss_and_grad(
        &self,
        x: &[f64; META_INPUTS],
        y: f64,
        masks: Option<&[Vec<f64>]>,
        grad: &mut [f64],
    ) -> Result<f64> {
        if grad.len() != self.params.len() {
            return Err(Error::shape("meta gradient buffer has the wrong length"));
        }
        let trace = self.run(x, masks);
        let layers = self.offsets.len();
        let f = self.scale * trace.pre[layers - 1][0];
        let mut upstream = vec![2.0 * (f - y) * self.scale];
        for l in (0..layers).rev() {
            let (w, _) = self.layer(l);
            let (d_in, d_out) = (self.config.plan[l], self.config.plan[l + 1]);
            let off = self.offsets[l];
            let (gw, gb) = grad[off..off + (d_in + 1) * d_out].split_at_mut(d_in * d_out);
            if l == 0 {
                dense_adjoint_acc(&upstream, &trace.acts[0], w, gw, gb, None);
                break;
            }
            let mut below = vec![0.0; d_in];
            dense_adjoint_acc(&upstream, &trace.acts[l], w, gw, gb, Some(&mut below));
            let slope = self.config.leaky_slope;
            for (i, g) in below.iter_mut().enumerate() {
                if let Some(m) = masks {
                    *g *= m[l - 1][i];
                }
                if trace.pre[l - 1][i] <= 0.0 {
                    *g *= slope;
                }
            }
            upstream = below;
        }
        Ok((f - y) * (f - y))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaTrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Share of samples held out for early stopping.
    pub holdout: f64,
    #[serde(default)]
    pub max_batches_per_epoch: Option<usize>,
    #[serde(default)]
    pub max_holdout_samples: Option<usize>,
}

impl Default for MetaTrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 256,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            holdout: 0.1,
            max_batches_per_epoch: None,
            max_holdout_samples: None,
        }
    }
}

/// One meta-learner example: the base predictions at a (step, point) of a
/// forecast and the true displacement there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StackingSample {
    pub x: [f64; META_INPUTS],
    pub y: f64,
    /// 1-based forecast step.
    pub step: usize,
    pub point: usize,
    pub sequence: usize,
}

/// Minibatch Adam on squared error with a seeded holdout for early stopping.
/// Returns the best-holdout weights and the epoch history.
pub fn train_meta(
    net: MetaNet,
    samples: &[StackingSample],
    cfg: &MetaTrainConfig,
) -> Result<(MetaNet, Vec<EpochRecord>)> {
    if samples.is_empty() {
        return Err(Error::data("no stacking samples"));
    }
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) || !(0.0..1.0).contains(&cfg.holdout) {
        return Err(Error::invalid("meta training needs batch size ≥ 1, lr > 0, holdout in [0, 1)"));
    }
    if cfg.max_epochs == 0 {
        return Ok((net, Vec::new()));
    }
    let root = RngStream::new(cfg.seed, purpose::META);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    root.substream(0).shuffle(&mut order);
    let n_hold = ((samples.len() as f64) * cfg.holdout).round() as usize;
    let n_hold = n_hold.min(samples.len() - 1);
    let (train, hold) = order.split_at(samples.len() - n_hold);
    let mut monitor: Vec<usize> = if hold.is_empty() { train.to_vec() } else { hold.to_vec() };
    monitor.sort_unstable();
    let monitor = crate::convlstm::strided(&monitor, cfg.max_holdout_samples);

    let shuffle_root = root.substream(1);
    let dropout_root = root.substream(2);
    let use_dropout = net.config.dropout > 0.0;
    let mut net = net;
    let mut adam = AdamState::new(net.count_params(), AdamConfig::with_lr(cfg.lr));
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0;
    let mut history = Vec::new();

    for epoch in 0..cfg.max_epochs {
        let mut perm = train.to_vec();
        shuffle_root.substream(epoch as u64).shuffle(&mut perm);
        let n_batches = perm.len().div_ceil(cfg.batch_size);
        let n_batches = cfg.max_batches_per_epoch.map_or(n_batches, |m| n_batches.min(m));
        let epoch_rng = dropout_root.substream(epoch as u64);
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for b in 0..n_batches {
            let start = b * cfg.batch_size;
            let batch = &perm[start..(start + cfg.batch_size).min(perm.len())];
            let snapshot = &net;
            let parts: Vec<(Vec<f64>, f64)> = batch
                .par_chunks(CHUNK)
                .enumerate()
                .map(|(ci, chunk)| {
                    let mut grad = vec![0.0; snapshot.count_params()];
                    let mut loss = 0.0;
                    for (k, &idx) in chunk.iter().enumerate() {
                        let pos = (start + ci * CHUNK + k) as u64;
                        let masks = use_dropout
                            .then(|| snapshot.sample_masks(&mut epoch_rng.substream(pos)));
                        let s = &samples[idx];
                        loss += snapshot.loss_and_grad(&s.x, s.y, masks.as_deref(), &mut grad)?;
                    }
                    Ok((grad, loss))
                })
                .collect::<Result<_>>()?;
            let mut grad = vec![0.0; net.count_params()];
            for (g, l) in &parts {
                grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                loss_sum += l;
            }
            seen += batch.len();
            let inv = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            if !loss_sum.is_finite() {
                return Err(Error::Numerical(format!("meta epoch {}: training loss diverged", epoch + 1)));
            }
            adam_update(net.params_mut(), &grad, &mut adam)
                .map_err(|e| Error::Numerical(format!("meta epoch {}: {e}", epoch + 1)))?;
        }
        let hold_loss = monitor
            .par_chunks(CHUNK)
            .map(|c| c.iter().map(|&i| net.loss(&samples[i].x, samples[i].y, None)).sum::<f64>())
            .collect::<Vec<f64>>()
            .iter()
            .sum::<f64>()
            / monitor.len() as f64;
        if !hold_loss.is_finite() {
            return Err(Error::Numerical(format!("meta epoch {}: holdout loss is {hold_loss}", epoch + 1)));
        }
        history.push(EpochRecord { epoch: epoch + 1, train_loss: loss_sum / seen.max(1) as f64, val_loss: hold_loss });
        match &best {
            Some((b, _)) if hold_loss >= *b => since_best += 1,
            _ => {
                best = Some((hold_loss, net.params().to_vec()));
                since_best = 0;
            }
        }
        if since_best > cfg.patience {
            break;
        }
    }
    if let Some((_, p)) = best {
        net.params_mut().copy_from_slice(&p);
    }
    Ok((net, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::fdiff::{finite_difference_grad, max_relative_error};

    #[test]
    fn full_plan_count() {
        assert_eq!(count_meta_params(&DEFAULT_META_PLAN), 523_713);
        let net = MetaNet::zeros(MetaConfig::default()).unwrap();
        assert_eq!(net.count_params(), 523_713);
        let listed: usize = net.tensors().iter().map(|(_, _, v)| v.len()).sum();
        assert_eq!(listed, 523_713);
    }

    #[test]
    fn rejects_bad_plans() {
        assert!(MetaNet::zeros(MetaConfig::with_plan(vec![2, 4, 1])).is_err());
        assert!(MetaNet::zeros(MetaConfig::with_plan(vec![3, 4, 2])).is_err());
        assert!(MetaNet::zeros(MetaConfig::with_plan(vec![3, 0, 1])).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = MetaConfig::with_plan(vec![3, 6, 5, 1]);
        for seed in 0..5 {
            let mut net = MetaNet::init(cfg.clone(), &mut RngStream::new(seed, 1)).unwrap();
            let mut rng = RngStream::new(seed, 2);
            for p in net.params_mut() {
                *p += 0.05 * rng.normal();
            }
            net.set_scale(0.7).unwrap();
            let x = [rng.normal(), rng.normal(), rng.normal()];
            let y = rng.normal();
            for masks in [None, Some(net.sample_masks(&mut rng))] {
                let mut grad = vec![0.0; net.count_params()];
                net.loss_and_grad(&x, y, masks.as_deref(), &mut grad).unwrap();
                let base = net.params().to_vec();
                let numeric = finite_difference_grad(
                    |p| {
                        let n = MetaNet::from_params(cfg.clone(), p.to_vec(), 0.7)?;
                        Ok(n.loss(&x, y, masks.as_deref()))
                    },
                    &base,
                    1e-5,
                )
                .unwrap();
                let err = max_relative_error(&grad, &numeric);
                assert!(err < 1e-5, "seed {seed}: {err}");
            }
        }
    }

    fn copy_b_samples(n: usize, seed: u64) -> Vec<StackingSample> {
        let mut rng = RngStream::new(seed, 0);
        (0..n)
            .map(|i| {
                let b = rng.uniform_range(0.0, 0.02);
                let x = [b + 0.004 * rng.normal(), b, b * 0.5 + 0.004 * rng.normal()];
                StackingSample { x, y: b, step: 1 + i % 10, point: i % 100, sequence: i / 1000 }
            })
            .collect()
    }

    #[test]
    fn learns_to_copy_second_input() {
        let samples = copy_b_samples(4_000, 1);
        let mut net = MetaNet::init(MetaConfig { dropout: 0.0, ..MetaConfig::with_plan(vec![3, 16, 16, 1]) }, &mut RngStream::new(1, 3)).unwrap();
        net.fit_scale(samples.iter().map(|s| s.y)).unwrap();
        let cfg = MetaTrainConfig { max_epochs: 40, batch_size: 64, lr: 3e-3, ..Default::default() };
        let (net, hist) = train_meta(net, &samples, &cfg).unwrap();
        assert!(!hist.is_empty());
        let mean_y = samples.iter().map(|s| s.y).sum::<f64>() / samples.len() as f64;
        let baseline = samples.iter().map(|s| (s.y - mean_y).powi(2)).sum::<f64>() / samples.len() as f64;
        let mse = samples.iter().map(|s| net.loss(&s.x, s.y, None)).sum::<f64>() / samples.len() as f64;
        assert!(mse < 0.05 * baseline, "{mse} vs {baseline}");
        let worst = samples.iter().map(|s| (net.predict(&s.x) - s.x[1]).abs()).fold(0.0, f64::max);
        assert!(worst < 2e-3, "{worst}");
    }

    #[test]
    fn zero_epochs_and_determinism() {
        let samples = copy_b_samples(500, 2);
        let net = MetaNet::init(MetaConfig::with_plan(vec![3, 8, 1]), &mut RngStream::new(4, 0)).unwrap();
        let zero = MetaTrainConfig { max_epochs: 0, ..Default::default() };
        assert_eq!(train_meta(net.clone(), &samples, &zero).unwrap().0, net);
        let cfg = MetaTrainConfig { max_epochs: 3, batch_size: 32, ..Default::default() };
        let a = train_meta(net.clone(), &samples, &cfg).unwrap();
        let b = train_meta(net, &samples, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(train_meta(a.0, &[], &cfg).is_err());
    }
}
