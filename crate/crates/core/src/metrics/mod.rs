//! Profile agreement measures and their per-step aggregation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_pair(pred: &[f64], obs: &[f64]) -> Result<()> {
    if pred.len() != obs.len() {
        return Err(Error::shape(format!("{} predictions for {} observations", pred.len(), obs.len())));
    }
    if obs.is_empty() {
        return Err(Error::data("no points to score"));
    }
    crate::error::ensure_finite(pred, "prediction")?;
    crate::error::ensure_finite(obs, "observation")
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sse(pred: &[f64], obs: &[f64]) -> f64 {
    pred.iter().zip(obs).map(|(p, o)| (o - p) * (o - p)).sum()
}

/// Mean absolute error.
pub fn mae(pred: &[f64], obs: &[f64]) -> Result<f64> {
    check_pair(pred, obs)?;
    Ok(pred.iter().zip(obs).map(|(p, o)| (p - o).abs()).sum::<f64>() / obs.len() as f64)
}

/// Coefficient of determination against the observation mean; negative when
/// the prediction is worse than that mean.
pub fn r2(pred: &[f64], obs: &[f64]) -> Result<f64> {
    check_pair(pred, obs)?;
    let m = mean(obs);
    let sst: f64 = obs.iter().map(|o| (o - m) * (o - m)).sum();
    if sst == 0.0 {
        return Err(Error::Numerical("R² undefined for constant observations".into()));
    }
    Ok(1.0 - sse(pred, obs) / sst)
}

/// Willmott's index of agreement.
pub fn ioa(pred: &[f64], obs: &[f64]) -> Result<f64> {
    check_pair(pred, obs)?;
    let m = mean(obs);
    let potential: f64 = pred
        .iter()
        .zip(obs)
        .map(|(p, o)| {
            let s = (p - m).abs() + (o - m).abs();
            s * s
        })
        .sum();
    let err = sse(pred, obs);
    if potential == 0.0 {
        return if err == 0.0 {
            Ok(1.0)
        } else {
            Err(Error::Numerical("index of agreement undefined: zero denominator".into()))
        };
    }
    Ok(1.0 - err / potential)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// 1-based prediction step.
    pub step: usize,
    pub mae: f64,
    pub r2: f64,
    pub ioa: f64,
    /// Sequences averaged.
    pub n: usize,
}

/// One forecast to score: `[steps, points]` predictions and truths.
#[derive(Debug, Clone, Copy)]
pub struct Scored<'a> {
    pub pred: &'a [f64],
    pub truth: &'a [f64],
}

/// Scores each of the first `steps` rows of every sequence, then averages
/// over sequences per step.
pub fn stepwise_eval(seqs: &[Scored<'_>], steps: usize, points: usize) -> Result<Vec<StepMetrics>> {
    if seqs.is_empty() {
        return Err(Error::data("no sequences to evaluate"));
    }
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let (mut m, mut r, mut d) = (0.0, 0.0, 0.0);
        for (i, s) in seqs.iter().enumerate() {
            if s.pred.len() < steps * points || s.truth.len() < steps * points {
                return Err(Error::data(format!("sequence {i} has fewer than {steps} steps")));
            }
            let p = &s.pred[k * points..(k + 1) * points];
            let o = &s.truth[k * points..(k + 1) * points];
            m += mae(p, o)?;
            r += r2(p, o)?;
            d += ioa(p, o)?;
        }
        let n = seqs.len() as f64;
        out.push(StepMetrics { step: k + 1, mae: m / n, r2: r / n, ioa: d / n, n: seqs.len() });
    }
    Ok(out)
}

/// Columns: model, step, mae, r2, ioa, n.
pub fn write_step_metrics(path: &Path, tables: &[(String, Vec<StepMetrics>)]) -> Result<()> {
    if let Some(dir) = path.parent() {
        crate::persist::ensure_dir(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "step", "mae", "r2", "ioa", "n"])?;
    for (model, rows) in tables {
        for s in rows {
            w.write_record([
                model.clone(),
                s.step.to_string(),
                s.mae.to_string(),
                s.r2.to_string(),
                s.ioa.to_string(),
                s.n.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_step_metrics(path: &Path) -> Result<Vec<(String, Vec<StepMetrics>)>> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    let mut out: Vec<(String, Vec<StepMetrics>)> = Vec::new();
    for (line, row) in r.records().enumerate() {
        let row = row?;
        let bad = || Error::data(format!("{}: malformed row {}", path.display(), line + 2));
        let f = |i: usize| row.get(i).and_then(|v| v.parse::<f64>().ok()).ok_or_else(bad);
        let model = row.get(0).ok_or_else(bad)?.to_string();
        let m = StepMetrics {
            step: row.get(1).and_then(|v| v.parse().ok()).ok_or_else(bad)?,
            mae: f(2)?,
            r2: f(3)?,
            ioa: f(4)?,
            n: row.get(5).and_then(|v| v.parse().ok()).ok_or_else(bad)?,
        };
        match out.last_mut() {
            Some((name, rows)) if *name == model => rows.push(m),
            _ => out.push((model, vec![m])),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn profile(n: usize) -> Vec<f64> {
        (0..n).map(|i| (i as f64 * 0.13).sin() * 0.01 + 0.004 * i as f64 / n as f64).collect()
    }

    #[test]
    fn perfect_prediction() {
        let o = profile(100);
        assert_eq!(mae(&o, &o).unwrap(), 0.0);
        assert_eq!(r2(&o, &o).unwrap(), 1.0);
        assert_eq!(ioa(&o, &o).unwrap(), 1.0);
    }

    #[test]
    fn constant_offset_mae() {
        let o = profile(100);
        let p: Vec<f64> = o.iter().map(|v| v + 0.001).collect();
        assert_abs_diff_eq!(mae(&p, &o).unwrap(), 0.001, epsilon = 1e-15);
    }

    #[test]
    fn mae_matches_resummation() {
        let o = profile(100);
        let p: Vec<f64> = o.iter().enumerate().map(|(i, v)| v * 1.1 - 1e-4 * i as f64).collect();
        let mut acc = 0.0;
        for i in (0..100).rev() {
            acc += (o[i] - p[i]).abs();
        }
        assert_abs_diff_eq!(mae(&p, &o).unwrap(), acc / 100.0, epsilon = 1e-16);
    }

    #[test]
    fn mean_prediction_scores_zero() {
        let o = profile(100);
        let m = mean(&o);
        let p = vec![m; 100];
        assert_abs_diff_eq!(r2(&p, &o).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ioa(&p, &o).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn reflected_prediction_is_minus_three() {
        let o = profile(100);
        let m = mean(&o);
        let p: Vec<f64> = o.iter().map(|v| 2.0 * m - v).collect();
        assert_abs_diff_eq!(r2(&p, &o).unwrap(), -3.0, epsilon = 1e-12);
    }

    #[test]
    fn ioa_is_not_symmetric_in_general() {
        let p = [0.0; 4];
        let o = [0.0, 0.0, 0.0, 0.8];
        assert_eq!(ioa(&o, &p).unwrap(), 0.0);
        assert!(ioa(&p, &o).unwrap() > 0.4);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(r2(&[1.0, 2.0], &[3.0, 3.0]).is_err());
        assert_eq!(ioa(&[3.0, 3.0], &[3.0, 3.0]).unwrap(), 1.0);
        assert!(ioa(&[1.0, 2.0], &[3.0]).is_err());
        assert!(mae(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn stepwise_averages() {
        let o = profile(200);
        let mut half = o.clone();
        let m2 = mean(&o[100..]);
        half[100..].iter_mut().for_each(|v| *v = m2);
        let seqs = [Scored { pred: &o, truth: &o }, Scored { pred: &half, truth: &o }];
        let s = stepwise_eval(&seqs, 2, 100).unwrap();
        assert_eq!(s[0].ioa, 1.0);
        assert_abs_diff_eq!(s[1].ioa, 0.5, epsilon = 1e-12);
        assert_eq!(s[1].n, 2);
        assert!(stepwise_eval(&[], 2, 100).is_err());
        assert!(stepwise_eval(&seqs, 3, 100).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let rows = vec![StepMetrics { step: 1, mae: 0.1, r2: -0.25, ioa: 1.0 / 3.0, n: 4 }];
        let tables = vec![("t3".to_string(), rows.clone()), ("ensemble".into(), rows)];
        write_step_metrics(&p, &tables).unwrap();
        assert_eq!(read_step_metrics(&p).unwrap(), tables);
    }

    fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (4usize..40).prop_flat_map(|n| {
            (prop::collection::vec(-1.0f64..1.0, n), prop::collection::vec(-1.0f64..1.0, n))
        })
    }

    proptest! {
        #[test]
        fn permutation_invariant((p, o) in pair(), seed in any::<u64>()) {
            let mut idx: Vec<usize> = (0..p.len()).collect();
            crate::rng::RngStream::new(seed, 0).shuffle(&mut idx);
            let pp: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
            let oo: Vec<f64> = idx.iter().map(|&i| o[i]).collect();
            prop_assert!((mae(&p, &o).unwrap() - mae(&pp, &oo).unwrap()).abs() < 1e-12);
            prop_assert!((r2(&p, &o).unwrap() - r2(&pp, &oo).unwrap()).abs() < 1e-9);
            prop_assert!((ioa(&p, &o).unwrap() - ioa(&pp, &oo).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn affine_behaviour((p, o) in pair(), a in 0.01f64..100.0, b in -10.0f64..10.0) {
            let pa: Vec<f64> = p.iter().map(|v| a * v + b).collect();
            let oa: Vec<f64> = o.iter().map(|v| a * v + b).collect();
            let ps: Vec<f64> = p.iter().map(|v| a * v).collect();
            let os: Vec<f64> = o.iter().map(|v| a * v).collect();
            prop_assert!((mae(&ps, &os).unwrap() - a * mae(&p, &o).unwrap()).abs() < 1e-9 * a);
            prop_assert!((r2(&pa, &oa).unwrap() - r2(&p, &o).unwrap()).abs() < 1e-6);
            prop_assert!((ioa(&pa, &oa).unwrap() - ioa(&p, &o).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn ioa_bounded((p, o) in pair()) {
            prop_assert!(ioa(&p, &o).unwrap() <= 1.0);
        }

        // The denominator is centred on the observation mean, so swapping the
        // arguments only leaves the index unchanged when both means agree.
        #[test]
        fn ioa_symmetric_at_equal_means((p, o) in pair()) {
            let shift = mean(&o) - mean(&p);
            let p: Vec<f64> = p.iter().map(|v| v + shift).collect();
            prop_assert!((ioa(&p, &o).unwrap() - ioa(&o, &p).unwrap()).abs() < 1e-9);
        }
    }
}
