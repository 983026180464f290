//! Exact Shapley attribution of a three-input scalar function, by enumerating
//! all coalitions with interventional replacement from a background set.

use std::path::Path;

use rayon::prelude::*;

use crate::ensemble::{MetaNet, StackingSample, META_INPUTS};
use crate::error::{ensure_finite, Error, Result};
use crate::rng::RngStream;

type Point = [f64; META_INPUTS];

/// Shapley weight |S|!(n-|S|-1)!/n! for n = 3, by coalition size.
const WEIGHTS: [f64; META_INPUTS] = [1.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0];
const FULL: usize = (1 << META_INPUTS) - 1;

/// A batch-evaluated function of three inputs.
pub trait Explained: Sync {
    fn eval_many(&self, xs: &[Point]) -> Result<Vec<f64>>;
}

impl Explained for MetaNet {
    fn eval_many(&self, xs: &[Point]) -> Result<Vec<f64>> {
        self.predict_many(xs)
    }
}

impl<F> Explained for F
where
    F: Fn(&Point) -> f64 + Sync,
{
    fn eval_many(&self, xs: &[Point]) -> Result<Vec<f64>> {
        let out: Vec<f64> = xs.iter().map(self).collect();
        ensure_finite(&out, "explained function output")?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapValues {
    pub phi: Point,
    /// Mean output over the background.
    pub baseline: f64,
    /// Output at the explained point.
    pub value: f64,
}

/// A background set with its mean output, reusable across explained points.
pub struct Explainer<'a, F: Explained + ?Sized> {
    f: &'a F,
    background: Vec<Point>,
    baseline: f64,
}

impl<'a, F: Explained + ?Sized> Explainer<'a, F> {
    pub fn new(f: &'a F, background: Vec<Point>) -> Result<Self> {
        if background.is_empty() {
            return Err(Error::invalid("Shapley background must not be empty"));
        }
        let out = f.eval_many(&background)?;
        let baseline = out.iter().sum::<f64>() / out.len() as f64;
        Ok(Self { f, background, baseline })
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn explain(&self, x: &Point) -> Result<ShapValues> {
        let k = self.background.len();
        // Coalitions other than the empty and full ones need the background.
        let mut rows = Vec::with_capacity((FULL - 1) * k + 1);
        for s in 1..FULL {
            for b in &self.background {
                let mut z = *b;
                for (i, zi) in z.iter_mut().enumerate() {
                    if s & (1 << i) != 0 {
                        *zi = x[i];
                    }
                }
                rows.push(z);
            }
        }
        rows.push(*x);
        let out = self.f.eval_many(&rows)?;
        let mut v = [0.0; FULL + 1];
        v[0] = self.baseline;
        for s in 1..FULL {
            v[s] = out[(s - 1) * k..s * k].iter().sum::<f64>() / k as f64;
        }
        let value = out[out.len() - 1];
        v[FULL] = value;
        let mut phi = [0.0; META_INPUTS];
        for (i, p) in phi.iter_mut().enumerate() {
            let bit = 1 << i;
            for s in (0..=FULL).filter(|s| s & bit == 0) {
                *p += WEIGHTS[(s as u32).count_ones() as usize] * (v[s | bit] - v[s]);
            }
        }
        Ok(ShapValues { phi, baseline: self.baseline, value })
    }
}

/// Shapley values of `f` at `x` against `background`.
pub fn exact_shapley<F: Explained + ?Sized>(f: &F, x: &Point, background: &[Point]) -> Result<ShapValues> {
    Explainer::new(f, background.to_vec())?.explain(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapRecord {
    pub sequence: usize,
    pub step: usize,
    pub point: usize,
    pub x: Point,
    pub shap: ShapValues,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContributionRow {
    pub step: usize,
    pub mean_abs: Point,
    /// `mean_abs` normalised to sum to one, or uniform when all are zero.
    pub share: Point,
    pub n: usize,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContributionTable {
    pub models: [String; META_INPUTS],
    pub rows: Vec<ContributionRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapConfig {
    pub background: usize,
    /// Evenly strided cap on explained samples per step.
    pub max_per_step: Option<usize>,
}

impl Default for ShapConfig {
    fn default() -> Self {
        Self { background: 256, max_per_step: None }
    }
}

/// Draws `k` background rows without replacement (all rows if fewer).
pub fn draw_background(samples: &[StackingSample], k: usize, rng: &mut RngStream) -> Vec<Point> {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    rng.shuffle(&mut idx);
    idx.truncate(k.min(samples.len()));
    idx.into_iter().map(|i| samples[i].x).collect()
}

/// Mean |φ| per model at each forecast step 1..=`steps`, normalised per step.
pub fn stepwise_contributions<F: Explained + ?Sized>(
    f: &F,
    models: [String; META_INPUTS],
    samples: &[StackingSample],
    steps: usize,
    cfg: &ShapConfig,
    rng: &mut RngStream,
) -> Result<(ContributionTable, Vec<ShapRecord>)> {
    if samples.is_empty() {
        return Err(Error::data("no samples to attribute"));
    }
    let explainer = Explainer::new(f, draw_background(samples, cfg.background, rng))?;
    let mut rows = Vec::with_capacity(steps);
    let mut records = Vec::new();
    for step in 1..=steps {
        let group: Vec<&StackingSample> = samples.iter().filter(|s| s.step == step).collect();
        if group.is_empty() {
            return Err(Error::data(format!("no samples for step {step}")));
        }
        let group = crate::convlstm::strided(&group, cfg.max_per_step);
        let shaps: Vec<ShapValues> = group.par_iter().map(|s| explainer.explain(&s.x)).collect::<Result<_>>()?;
        let mut mean_abs = [0.0; META_INPUTS];
        for s in &shaps {
            for (m, p) in mean_abs.iter_mut().zip(s.phi) {
                *m += p.abs();
            }
        }
        mean_abs.iter_mut().for_each(|m| *m /= shaps.len() as f64);
        let total: f64 = mean_abs.iter().sum();
        let degenerate = !(total > 0.0);
        let share = if degenerate {
            [1.0 / META_INPUTS as f64; META_INPUTS]
        } else {
            mean_abs.map(|m| m / total)
        };
        rows.push(ContributionRow { step, mean_abs, share, n: shaps.len(), degenerate });
        records.extend(group.iter().zip(shaps).map(|(s, shap)| ShapRecord {
            sequence: s.sequence,
            step: s.step,
            point: s.point,
            x: s.x,
            shap,
        }));
    }
    Ok((ContributionTable { models, rows }, records))
}

/// Columns: step, model, mean_abs_shap, normalized_share, n, degenerate.
pub fn write_contributions(path: &Path, table: &ContributionTable) -> Result<()> {
    if let Some(dir) = path.parent() {
        crate::persist::ensure_dir(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "model", "mean_abs_shap", "normalized_share", "n", "degenerate"])?;
    for r in &table.rows {
        for (i, model) in table.models.iter().enumerate() {
            w.write_record([
                r.step.to_string(),
                model.clone(),
                r.mean_abs[i].to_string(),
                r.share[i].to_string(),
                r.n.to_string(),
                r.degenerate.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_contributions(path: &Path) -> Result<ContributionTable> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    let mut models: Vec<String> = Vec::new();
    let mut rows: Vec<ContributionRow> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = || Error::data(format!("{}: malformed row {}", path.display(), line + 2));
        let step: usize = rec.get(0).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let model = rec.get(1).ok_or_else(bad)?.to_string();
        let num = |i: usize| rec.get(i).and_then(|v| v.parse::<f64>().ok()).ok_or_else(bad);
        let (m, s) = (num(2)?, num(3)?);
        let n: usize = rec.get(4).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let degenerate: bool = rec.get(5).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let slot = line % META_INPUTS;
        if slot == 0 {
            rows.push(ContributionRow { step, mean_abs: [0.0; 3], share: [0.0; 3], n, degenerate });
        }
        if rows.len() == 1 {
            models.push(model);
        }
        let row = rows.last_mut().ok_or_else(bad)?;
        row.mean_abs[slot] = m;
        row.share[slot] = s;
    }
    let models: [String; META_INPUTS] = models
        .try_into()
        .map_err(|_| Error::data(format!("{}: expected {META_INPUTS} models per step", path.display())))?;
    Ok(ContributionTable { models, rows })
}

/// Columns: sequence, step, point, the three inputs, the three φ, baseline, value.
pub fn write_shap_records(path: &Path, models: &[String; META_INPUTS], records: &[ShapRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        crate::persist::ensure_dir(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["sequence", "step", "point"].iter().map(|s| s.to_string()).collect();
    header.extend(models.iter().map(|m| format!("x_{m}")));
    header.extend(models.iter().map(|m| format!("phi_{m}")));
    header.extend(["baseline".to_string(), "value".to_string()]);
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.sequence.to_string(), r.step.to_string(), r.point.to_string()];
        row.extend(r.x.iter().map(f64::to_string));
        row.extend(r.shap.phi.iter().map(f64::to_string));
        row.extend([r.shap.baseline.to_string(), r.shap.value.to_string()]);
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
