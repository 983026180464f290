//! Minibatch Adam training for single-step prediction.
//!
//! Batches are split into fixed-size chunks whose gradients are computed in
//! parallel and then summed in chunk order, so results do not depend on the
//! number of worker threads. Dropout masks come from a stream keyed by
//! `(epoch, position in epoch)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{adam_update, AdamConfig, AdamState};
use crate::rng::{purpose, RngStream};

use super::ConvLstmStack;

/// Samples per parallel work unit. Changing this changes summation order.
pub(crate) const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Caps the minibatches drawn per epoch (a fresh shuffle each epoch).
    #[serde(default)]
    pub max_batches_per_epoch: Option<usize>,
    /// Evaluates early stopping on an evenly strided subset of this size.
    #[serde(default)]
    pub max_val_samples: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 64,
            max_epochs: 200,
            patience: 10,
            seed: 0,
            max_batches_per_epoch: None,
            max_val_samples: None,
        }
    }
}

impl TrainConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// One supervised pair: a flat `t·L` window and the following profile.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub window: &'a [f64],
    pub target: &'a [f64],
}

/// Evenly strided subset of at most `cap` items.
pub(crate) fn strided<T: Copy>(items: &[T], cap: Option<usize>) -> Vec<T> {
    match cap {
        Some(cap) if cap < items.len() && cap > 0 => {
            (0..cap).map(|k| items[k * items.len() / cap]).collect()
        }
        _ => items.to_vec(),
    }
}

fn mean_inference_loss(model: &ConvLstmStack, set: &[Sample<'_>]) -> Result<f64> {
    let losses: Vec<f64> = set
        .par_iter()
        .map(|s| model.loss(s.window, s.target, None))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Trains `model` on `train`, early-stopping on `val` MSE, and returns the
/// weights of the best validation epoch with the per-epoch history.
pub fn train_single_step(
    model: ConvLstmStack,
    train: &[Sample<'_>],
    val: &[Sample<'_>],
    cfg: &TrainConfig,
) -> Result<(ConvLstmStack, Vec<EpochRecord>)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::data("training set is empty"));
    }
    let spatial = model.spatial();
    let window_len = model.resolution() * spatial;
    if let Some(s) = train.iter().chain(val).find(|s| s.window.len() != window_len || s.target.len() != spatial) {
        return Err(Error::shape(format!(
            "sample has window {} / target {}, model needs {window_len} / {spatial}",
            s.window.len(),
            s.target.len()
        )));
    }
    if cfg.max_epochs == 0 {
        return Ok((model, Vec::new()));
    }

    let monitor = if val.is_empty() {
        strided(train, cfg.max_val_samples)
    } else {
        strided(val, cfg.max_val_samples)
    };
    let shuffle_root = RngStream::new(cfg.seed, purpose::SHUFFLE);
    let dropout_root = RngStream::new(cfg.seed, purpose::DROPOUT);
    let use_dropout = model.config().dropout > 0.0;

    let mut model = model;
    let mut adam = AdamState::new(model.count_params(), AdamConfig::with_lr(cfg.lr));
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0;
    let mut history = Vec::new();

    for epoch in 0..cfg.max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        shuffle_root.substream(epoch as u64).shuffle(&mut order);
        let n_batches = order.len().div_ceil(cfg.batch_size);
        let n_batches = cfg.max_batches_per_epoch.map_or(n_batches, |m| n_batches.min(m));
        let epoch_rng = dropout_root.substream(epoch as u64);

        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for b in 0..n_batches {
            let start = b * cfg.batch_size;
            let batch = &order[start..(start + cfg.batch_size).min(order.len())];
            let snapshot = &model;
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
                        let s = &train[idx];
                        loss += snapshot.loss_and_grad(s.window, s.target, masks.as_ref(), &mut grad)?;
                    }
                    Ok((grad, loss))
                })
                .collect::<Result<_>>()?;
            let mut grad = vec![0.0; model.count_params()];
            for (g, l) in &parts {
                grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                loss_sum += l;
            }
            seen += batch.len();
            let inv = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            if !loss_sum.is_finite() {
                return Err(Error::Numerical(format!("epoch {}: training loss diverged", epoch + 1)));
            }
            adam_update(model.params_mut(), &grad, &mut adam)
                .map_err(|e| Error::Numerical(format!("epoch {}: {e}", epoch + 1)))?;
        }

        let train_loss = loss_sum / seen.max(1) as f64;
        let val_loss = mean_inference_loss(&model, &monitor)?;
        if !val_loss.is_finite() {
            return Err(Error::Numerical(format!("epoch {}: validation loss is {val_loss}", epoch + 1)));
        }
        history.push(EpochRecord { epoch: epoch + 1, train_loss, val_loss });
        match &best {
            Some((b, _)) if val_loss >= *b => since_best += 1,
            _ => {
                best = Some((val_loss, model.params().to_vec()));
                since_best = 0;
            }
        }
        if since_best > cfg.patience {
            break;
        }
    }
    if let Some((_, params)) = best {
        model.params_mut().copy_from_slice(&params);
    }
    Ok((model, history))
}
