use crate::error::{Error, Result};
use crate::rng::RngStream;

use super::Tensor;

pub(crate) fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// Inverted-dropout multipliers: 0 with probability `rate`, else `1/(1-rate)`.
pub(crate) fn dropout_mask(len: usize, rate: f64, rng: &mut RngStream) -> Vec<f64> {
    if rate == 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.uniform() < rate { 0.0 } else { keep })
        .collect()
}

/// Inverted dropout. With `training == false` or `rate == 0` the input is
/// returned untouched.
pub fn dropout(x: &Tensor, rate: f64, training: bool, rng: &mut RngStream) -> Result<Tensor> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok(x.clone());
    }
    let mask = dropout_mask(x.len(), rate, rng);
    Tensor::new(
        x.shape().to_vec(),
        x.data().iter().zip(&mask).map(|(v, m)| v * m).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_through_cases() {
        let mut rng = RngStream::new(1, 0);
        let x = Tensor::from_vec(vec![1.0, -2.0, 3.5]).unwrap();
        assert_eq!(dropout(&x, 0.0, true, &mut rng).unwrap(), x);
        assert_eq!(dropout(&x, 0.5, false, &mut rng).unwrap(), x);
    }

    #[test]
    fn rate_bounds() {
        let mut rng = RngStream::new(1, 0);
        let x = Tensor::zeros(vec![2]);
        assert!(dropout(&x, 1.0, true, &mut rng).is_err());
        assert!(dropout(&x, -0.1, true, &mut rng).is_err());
    }

    #[test]
    fn survivor_fraction_and_expectation() {
        let mut rng = RngStream::new(2024, 3);
        let n = 100_000;
        let x = Tensor::new(vec![n], vec![1.0; n]).unwrap();
        let y = dropout(&x, 0.5, true, &mut rng).unwrap();
        let survivors = y.data().iter().filter(|&&v| v != 0.0).count() as f64 / n as f64;
        assert!((0.49..=0.51).contains(&survivors), "{survivors}");
        let mean = y.data().iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
