use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Moment accumulators for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        Self { config, m: vec![0.0; n_params], v: vec![0.0; n_params], step: 0 }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// One bias-corrected Adam step, in place.
pub fn adam_update(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(format!(
            "adam: params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!(
            "adam step {}: gradient {i} is {}",
            state.step + 1,
            grads[i]
        )));
    }
    let AdamConfig { lr, beta1, beta2, epsilon } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![0.5, -1.0];
        let mut s = AdamState::new(2, AdamConfig::default());
        adam_update(&mut p, &[0.0, 0.0], &mut s).unwrap();
        assert_eq!(p, vec![0.5, -1.0]);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![0.0];
        let mut s = AdamState::new(1, AdamConfig::with_lr(0.001));
        adam_update(&mut p, &[1.0], &mut s).unwrap();
        // m_hat / (sqrt(v_hat) + eps) = 1 / (1 + 1e-8)
        assert!((p[0] + 0.001 / (1.0 + 1e-8)).abs() < 1e-18);
    }

    #[test]
    fn replays_are_bitwise_identical() {
        let run = || {
            let mut p = vec![0.1, 0.2, -0.3];
            let mut s = AdamState::new(3, AdamConfig::default());
            for k in 0..50 {
                let g: Vec<f64> = p.iter().map(|x| x * (k as f64).sin() + 0.01).collect();
                adam_update(&mut p, &g, &mut s).unwrap();
            }
            p
        };
        let (a, b) = (run(), run());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn rejects_non_finite_gradients() {
        let mut p = vec![0.0];
        let mut s = AdamState::new(1, AdamConfig::default());
        let e = adam_update(&mut p, &[f64::NAN], &mut s).unwrap_err();
        assert!(e.to_string().contains("step 1"));
        assert_eq!(s.step(), 0);
    }

    #[test]
    fn descends_a_quadratic() {
        let mut p = vec![3.0];
        let mut s = AdamState::new(1, AdamConfig::with_lr(0.05));
        for _ in 0..2000 {
            let g = [p[0]];
            adam_update(&mut p, &g, &mut s).unwrap();
        }
        assert!(p[0].abs() < 1e-2);
    }
}
