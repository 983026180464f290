use super::meta::{MetaNet, StackingSample, META_INPUTS};
use crate::error::{Error, Result};
use crate::forecast::RolloutResult;

/// Rollouts of the three base models from one origin, with the truth.
#[derive(Debug, Clone, Copy)]
pub struct StackingSequence<'a> {
    pub rollouts: [&'a RolloutResult; META_INPUTS],
    /// `[horizon, points]`.
    pub truth: &'a [f64],
}

fn check_aligned(rollouts: &[&RolloutResult; META_INPUTS]) -> Result<(usize, usize)> {
    let (h, p) = (rollouts[0].horizon, rollouts[0].points);
    for r in rollouts {
        if r.horizon != h || r.points != p || r.predictions.len() != h * p {
            return Err(Error::shape(format!(
                "rollout of {} is {}x{}, expected {h}x{p}",
                r.model, r.horizon, r.points
            )));
        }
    }
    Ok((h, p))
}

/// One sample per (sequence, step, point).
pub fn build_stacking_dataset(seqs: &[StackingSequence<'_>]) -> Result<Vec<StackingSample>> {
    let mut out = Vec::new();
    for (s, seq) in seqs.iter().enumerate() {
        let (h, p) = check_aligned(&seq.rollouts)?;
        if seq.truth.len() != h * p {
            return Err(Error::shape(format!(
                "sequence {s}: truth has {} values, rollouts cover {h}x{p}",
                seq.truth.len()
            )));
        }
        out.reserve(h * p);
        for i in 0..h * p {
            out.push(StackingSample {
                x: [seq.rollouts[0].predictions[i], seq.rollouts[1].predictions[i], seq.rollouts[2].predictions[i]],
                y: seq.truth[i],
                step: i / p + 1,
                point: i % p,
                sequence: s,
            });
        }
    }
    Ok(out)
}

/// Pointwise meta-learner output, `[horizon, points]`.
pub fn ensemble_predict(meta: &MetaNet, rollouts: [&RolloutResult; META_INPUTS]) -> Result<Vec<f64>> {
    let (h, p) = check_aligned(&rollouts)?;
    let xs: Vec<[f64; META_INPUTS]> = (0..h * p)
        .map(|i| [rollouts[0].predictions[i], rollouts[1].predictions[i], rollouts[2].predictions[i]])
        .collect();
    meta.predict_many(&xs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::MetaConfig;
    use crate::rng::RngStream;

    fn result(id: &str, values: Vec<f64>) -> RolloutResult {
        RolloutResult { model: id.into(), horizon: 10, points: 100, predictions: values, seed_window: vec![] }
    }

    #[test]
    fn five_sequences_give_five_thousand_samples() {
        let r: Vec<RolloutResult> = ["a", "b", "c"].iter().map(|m| result(m, vec![0.01; 1000])).collect();
        let truth = vec![0.02; 1000];
        let seqs: Vec<StackingSequence> =
            (0..5).map(|_| StackingSequence { rollouts: [&r[0], &r[1], &r[2]], truth: &truth }).collect();
        let samples = build_stacking_dataset(&seqs).unwrap();
        assert_eq!(samples.len(), 5_000);
        assert_eq!(samples[4_999].step, 10);
        assert_eq!(samples[4_999].point, 99);
        assert_eq!(samples[4_999].sequence, 4);
        let bad = StackingSequence { rollouts: [&r[0], &r[1], &r[2]], truth: &truth[..900] };
        assert!(build_stacking_dataset(&[bad]).is_err());
    }

    #[test]
    fn constant_inputs_give_constant_output() {
        let meta = MetaNet::init(MetaConfig::with_plan(vec![3, 8, 8, 1]), &mut RngStream::new(0, 0)).unwrap();
        let r: Vec<RolloutResult> = [0.01, 0.02, 0.03].iter().map(|&v| result("m", vec![v; 1000])).collect();
        let out = ensemble_predict(&meta, [&r[0], &r[1], &r[2]]).unwrap();
        assert_eq!(out.len(), 1000);
        assert!(out.iter().all(|&v| v == out[0]));
        let short = RolloutResult { horizon: 9, predictions: vec![0.0; 900], ..r[2].clone() };
        assert!(ensemble_predict(&meta, [&r[0], &r[1], &short]).is_err());
    }

    #[test]
    fn permuting_positions_permutes_output() {
        let meta = MetaNet::init(MetaConfig::with_plan(vec![3, 8, 1]), &mut RngStream::new(1, 0)).unwrap();
        let mut rng = RngStream::new(2, 0);
        let vals: Vec<Vec<f64>> = (0..3).map(|_| (0..1000).map(|_| rng.normal() * 0.01).collect()).collect();
        let r: Vec<RolloutResult> = vals.iter().map(|v| result("m", v.clone())).collect();
        let out = ensemble_predict(&meta, [&r[0], &r[1], &r[2]]).unwrap();
        let rev: Vec<RolloutResult> =
            vals.iter().map(|v| result("m", v.iter().rev().copied().collect())).collect();
        let out_rev = ensemble_predict(&meta, [&rev[0], &rev[1], &rev[2]]).unwrap();
        assert!(out.iter().rev().zip(&out_rev).all(|(a, b)| a == b));
    }
}
