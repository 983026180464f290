use crate::error::{Error, Result};

/// Interpolating cubic spline with zero curvature at both ends.
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Second derivatives at the knots.
    curvature: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(knots: &[f64], values: &[f64]) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::shape(format!(
                "{} knots but {} values",
                knots.len(),
                values.len()
            )));
        }
        if knots.len() < 4 {
            return Err(Error::data(format!("spline needs at least 4 knots, got {}", knots.len())));
        }
        if let Some(i) = knots.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::data(format!(
                "depths must be strictly increasing: {} then {}",
                knots[i],
                knots[i + 1]
            )));
        }
        crate::error::ensure_finite(values, "spline values")?;
        crate::error::ensure_finite(knots, "spline knots")?;

        // Thomas algorithm on the interior second derivatives.
        let n = knots.len();
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let mut diag = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 1..n - 1 {
            diag[i] = 2.0 * (h[i - 1] + h[i]);
            rhs[i] = 6.0
                * ((values[i + 1] - values[i]) / h[i] - (values[i] - values[i - 1]) / h[i - 1]);
        }
        for i in 2..n - 1 {
            let m = h[i - 1] / diag[i - 1];
            diag[i] -= m * h[i - 1];
            rhs[i] -= m * rhs[i - 1];
        }
        let mut curvature = vec![0.0; n];
        for i in (1..n - 1).rev() {
            curvature[i] = (rhs[i] - h[i] * curvature[i + 1]) / diag[i];
        }
        Ok(Self { knots: knots.to_vec(), values: values.to_vec(), curvature })
    }

    /// Value at `x`; outside the knot range the end cubic is extended.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.knots.len();
        let i = match self.knots.partition_point(|&k| k <= x) {
            0 => 0,
            p => (p - 1).min(n - 2),
        };
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - x) / h;
        let b = (x - self.knots[i]) / h;
        a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * self.curvature[i] + (b * b * b - b) * self.curvature[i + 1]) * h * h
                / 6.0
    }
}

/// `n` evenly spaced positions from `lo` to `hi`, both ends exact.
pub fn even_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| if k == n - 1 { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
            .collect(),
    }
}

/// Natural cubic spline through `(depths, values)` sampled at `n` evenly
/// spaced depths spanning the same range.
pub fn spline_resample(depths: &[f64], values: &[f64], n: usize) -> Result<Vec<f64>> {
    let spline = NaturalSpline::new(depths, values)?;
    let (lo, hi) = (depths[0], depths[depths.len() - 1]);
    Ok(even_grid(lo, hi, n).into_iter().map(|x| spline.eval(x)).collect())
}
