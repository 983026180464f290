//! Irregular monitoring-like series for generalisation checks.

use serde::{Deserialize, Serialize};

use super::surrogate::SmoothField;
use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::rng::RngStream;

/// Shortest series that still feeds a 10-step window plus a target.
pub const MIN_FIELD_STEPS: usize = 11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldLikeConfig {
    pub steps: usize,
    pub points: usize,
    /// Depth between measurement points, metres.
    pub spacing: f64,
    /// Largest absolute displacement in the series, metres.
    pub peak: f64,
    /// 0 gives a smooth monotone series; 1 gives plateaus, bumps and
    /// wiggles at full strength.
    pub irregularity: f64,
}

impl FieldLikeConfig {
    pub fn site_a() -> Self {
        Self { steps: 53, points: 43, spacing: 0.5, peak: 0.011, irregularity: 1.0 }
    }

    pub fn site_b() -> Self {
        Self { steps: 35, points: 22, spacing: 0.5, peak: 0.007, irregularity: 1.0 }
    }

    pub fn depths(&self) -> Vec<f64> {
        (0..self.points).map(|j| j as f64 * self.spacing).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.steps < MIN_FIELD_STEPS {
            return Err(Error::invalid(format!(
                "field-like series needs at least {MIN_FIELD_STEPS} steps, got {}",
                self.steps
            )));
        }
        if self.points < 4 {
            return Err(Error::invalid("field-like series needs at least 4 points"));
        }
        if !(self.spacing > 0.0 && self.peak > 0.0 && self.peak < 1.0) {
            return Err(Error::invalid("field-like spacing and peak must be positive, peak below 1 m"));
        }
        if !(0.0..=1.0).contains(&self.irregularity) {
            return Err(Error::invalid("irregularity must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// A `[steps, points]` displacement series in metres.
///
/// A monotone base profile deepens with uneven progress (some steps stall),
/// then localized bumps in the upper half and small temporally correlated
/// wiggles are laid on top, so the result is not monotone when irregular.
pub fn generate_field_like(cfg: &FieldLikeConfig, rng: &mut RngStream) -> Result<Tensor> {
    cfg.validate()?;
    let irr = cfg.irregularity;
    let depths = cfg.depths();
    let wall = *depths.last().unwrap_or(&0.0);
    let dig = 0.8 * wall;
    let (steps, points) = (cfg.steps, cfg.points);

    let mut progress = vec![0.0; steps];
    for k in 1..steps {
        let stall = rng.uniform() < 0.25 * irr;
        let burst = -(1.0 - rng.uniform()).ln();
        let inc = if stall { 0.0 } else { (1.0 - irr) + irr * burst };
        progress[k] = progress[k - 1] + inc;
    }
    let total = progress[steps - 1];
    if total <= 0.0 {
        progress.iter_mut().enumerate().for_each(|(k, p)| *p = k as f64);
    }
    let total = progress[steps - 1];
    progress.iter_mut().for_each(|p| *p /= total);

    let mut u = vec![0.0; steps * points];
    for (k, &pk) in progress.iter().enumerate() {
        let d = pk * dig;
        if d <= 0.0 {
            continue;
        }
        let sigma = 0.25 * d + 1.0;
        for (j, &z) in depths.iter().enumerate() {
            let shape = 0.3 * (-z / (0.6 * d)).exp()
                + 0.7 * (-(z - 0.7 * d).powi(2) / (2.0 * sigma * sigma)).exp();
            u[k * points + j] = pk.powf(1.5) * shape;
        }
    }
    for k in 1..steps {
        let (prev, cur) = u.split_at_mut(k * points);
        let prev = &prev[(k - 1) * points..];
        cur[..points].iter_mut().zip(prev).for_each(|(c, &q)| *c = c.max(q));
    }
    let base_peak = u.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    u.iter_mut().for_each(|v| *v /= base_peak);

    let bumps = (3.0 * irr).round() as usize;
    for _ in 0..bumps {
        let centre = rng.uniform_range(0.0, 0.5 * wall);
        let width = rng.uniform_range(1.0, 2.0);
        let sign = if rng.uniform() < 0.7 { 1.0 } else { -1.0 };
        let amp = sign * irr * rng.uniform_range(0.1, 0.25);
        let onset = rng.uniform_range(0.2, 0.75) * steps as f64;
        for k in 0..steps {
            let ramp = ((k as f64 - onset) / 5.0).clamp(0.0, 1.0);
            if ramp == 0.0 {
                continue;
            }
            for (j, &z) in depths.iter().enumerate() {
                let r = (z - centre) / width;
                u[k * points + j] += amp * ramp * (-0.5 * r * r).exp();
            }
        }
    }

    if irr > 0.0 {
        let field = SmoothField::new(&depths, 1.5);
        let rho: f64 = 0.6;
        let mut e = field.sample(rng);
        for (k, &pk) in progress.iter().enumerate() {
            if k > 0 {
                let fresh = field.sample(rng);
                e.iter_mut()
                    .zip(&fresh)
                    .for_each(|(e, f)| *e = rho * *e + (1.0 - rho * rho).sqrt() * f);
            }
            let amp = 0.03 * irr * (0.2 + pk);
            for j in 0..points {
                u[k * points + j] += amp * e[j];
            }
        }
    }

    let peak = u.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if peak <= 0.0 {
        return Err(Error::Numerical("field-like series collapsed to zero".into()));
    }
    let scale = cfg.peak / peak;
    u.iter_mut().for_each(|v| *v *= scale);
    Tensor::new(vec![steps, points], u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(cfg: &FieldLikeConfig, seed: u64) -> Tensor {
        generate_field_like(cfg, &mut RngStream::new(seed, 0)).unwrap()
    }

    fn peak(t: &Tensor) -> f64 {
        t.data().iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    #[test]
    fn site_shapes_and_scale() {
        let a = gen(&FieldLikeConfig::site_a(), 1);
        assert_eq!(a.shape(), &[53, 43]);
        assert!((peak(&a) - 0.011).abs() < 1e-15);
        let b = gen(&FieldLikeConfig::site_b(), 1);
        assert_eq!(b.shape(), &[35, 22]);
        assert!((peak(&b) - 0.007).abs() < 1e-15);
    }

    #[test]
    fn too_short_is_rejected() {
        let cfg = FieldLikeConfig { steps: 10, ..FieldLikeConfig::site_b() };
        assert!(generate_field_like(&cfg, &mut RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn noiseless_is_monotone() {
        let cfg = FieldLikeConfig { irregularity: 0.0, ..FieldLikeConfig::site_a() };
        let u = gen(&cfg, 2);
        let rows: Vec<_> = u.data().chunks_exact(cfg.points).collect();
        assert!(rows.windows(2).all(|w| w[0].iter().zip(w[1]).all(|(a, b)| b >= a)));
        assert!(rows[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn irregular_series_is_not_monotone() {
        let cfg = FieldLikeConfig::site_a();
        let u = gen(&cfg, 3);
        let rows: Vec<_> = u.data().chunks_exact(cfg.points).collect();
        let decreases = rows
            .windows(2)
            .flat_map(|w| w[0].iter().zip(w[1]).map(|(a, b)| b < a))
            .filter(|&d| d)
            .count();
        assert!(decreases > 0);
        let step_peaks: Vec<f64> = rows.iter().map(|r| r.iter().fold(0.0, |m: f64, v| m.max(v.abs()))).collect();
        let increments: Vec<f64> = step_peaks.windows(2).map(|w| w[1] - w[0]).collect();
        let (lo, hi) = increments.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(hi > 3.0 * lo.abs().max(1e-6), "increments look uniform");
    }
}
