//! Recursive multi-step forecasting: each prediction is appended to the
//! input window for the next one.

use std::path::Path;

use rayon::prelude::*;

use crate::convlstm::ConvLstmStack;
use crate::error::{Error, Result};
use crate::persist::{read_table, write_table};

/// Anything that maps the last `resolution` profiles to the next one.
pub trait OneStepModel: Sync {
    fn resolution(&self) -> usize;
    fn points(&self) -> usize;
    /// `window` is `[resolution, points]` row-major, oldest first.
    fn predict(&self, window: &[f64]) -> Result<Vec<f64>>;
}

impl OneStepModel for ConvLstmStack {
    fn resolution(&self) -> usize {
        ConvLstmStack::resolution(self)
    }

    fn points(&self) -> usize {
        self.spatial()
    }

    fn predict(&self, window: &[f64]) -> Result<Vec<f64>> {
        ConvLstmStack::predict(self, window)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    pub model: String,
    pub horizon: usize,
    pub points: usize,
    /// `[horizon, points]`.
    pub predictions: Vec<f64>,
    /// The observed window the recursion started from, `[resolution, points]`.
    pub seed_window: Vec<f64>,
}

impl RolloutResult {
    pub fn step(&self, k: usize) -> &[f64] {
        &self.predictions[k * self.points..(k + 1) * self.points]
    }
}

/// Rolls `model` forward `horizon` steps from the end of `history`
/// (`[phases, points]`, oldest first).
pub fn rollout(
    model: &dyn OneStepModel,
    id: &str,
    history: &[f64],
    horizon: usize,
) -> Result<RolloutResult> {
    let (t, p) = (model.resolution(), model.points());
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    if p == 0 || !history.len().is_multiple_of(p) {
        return Err(Error::shape(format!("history of {} values is not a whole number of {p}-point profiles", history.len())));
    }
    let phases = history.len() / p;
    if phases < t {
        return Err(Error::data(format!(
            "needs {t} past profiles, history has {phases}"
        )));
    }
    let seed_window = history[(phases - t) * p..].to_vec();
    let mut window = seed_window.clone();
    let mut predictions = Vec::with_capacity(horizon * p);
    for _ in 0..horizon {
        let next = model.predict(&window)?;
        if next.len() != p {
            return Err(Error::shape(format!("returned {} points, expected {p}", next.len())));
        }
        window.drain(..p);
        window.extend_from_slice(&next);
        predictions.extend(next);
    }
    Ok(RolloutResult { model: id.to_string(), horizon, points: p, predictions, seed_window })
}

/// Independent rollouts of several models from one history, in input order.
pub fn multi_rollout(
    models: &[(&str, &dyn OneStepModel)],
    history: &[f64],
    horizon: usize,
) -> Result<Vec<RolloutResult>> {
    models
        .par_iter()
        .map(|(id, m)| {
            rollout(*m, id, history, horizon).map_err(|e| e.context(&format!("model {id}")))
        })
        .collect()
}

/// Rows are steps, columns are profile points.
pub fn write_rollout_csv(path: &Path, r: &RolloutResult) -> Result<()> {
    let mut header = vec!["step".to_string()];
    header.extend((0..r.points).map(|i| format!("p{i}")));
    let rows = (0..r.horizon).map(|k| ((k + 1).to_string(), r.step(k)));
    write_table(path, &header, rows)
}

/// Reads the predictions back; the seed window is not stored.
pub fn read_rollout_csv(path: &Path, model: &str) -> Result<RolloutResult> {
    let t = read_table(path)?;
    let points = t.header.len().saturating_sub(1);
    if t.rows.iter().any(|r| r.len() != points) {
        return Err(Error::data(format!("{}: ragged rollout rows", path.display())));
    }
    Ok(RolloutResult {
        model: model.to_string(),
        horizon: t.rows.len(),
        points,
        predictions: t.rows.concat(),
        seed_window: Vec::new(),
    })
}
