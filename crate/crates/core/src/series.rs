use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SPACING_RTOL: f64 = 1e-9;

/// Uniformly spaced observations on the unit-interval convention `N * delta = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSeries {
    t: Vec<f64>,
    y: Vec<f64>,
    delta: f64,
}

impl SampleSeries {
    /// Validates an explicit grid. The grid must be ascending, uniform and
    /// satisfy `N * delta = 1`.
    pub fn new(t: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if t.len() != y.len() {
            return Err(Error::InvalidInput(format!(
                "t has {} entries but y has {}",
                t.len(),
                y.len()
            )));
        }
        let n = t.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 samples, got {n}"
            )));
        }
        if t.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite sample".into()));
        }
        let delta = (t[n - 1] - t[0]) / (n - 1) as f64;
        if delta <= 0.0 {
            return Err(Error::InvalidInput("grid is not ascending".into()));
        }
        for (i, w) in t.windows(2).enumerate() {
            let step = w[1] - w[0];
            if ((step - delta) / delta).abs() > SPACING_RTOL * n as f64 {
                return Err(Error::InvalidInput(format!(
                    "non-uniform spacing between samples {i} and {}",
                    i + 1
                )));
            }
        }
        if ((n as f64 * delta) - 1.0).abs() > SPACING_RTOL * n as f64 {
            return Err(Error::InvalidInput(format!(
                "grid spacing {delta} violates N*delta = 1 for N = {n}"
            )));
        }
        Ok(Self { t, y, delta })
    }

    /// Places `y` on the canonical grid `t_i = i / N`, `i = 1..N`.
    pub fn from_values(y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        let t = (1..=n).map(|i| i as f64 / n as f64).collect();
        Self::new(t, y)
    }

    /// Maps an arbitrary uniform grid onto the canonical grid. Returns the
    /// series together with `(offset, scale)` such that
    /// `t_original = offset + scale * t_canonical`.
    pub fn rescaled(t: &[f64], y: Vec<f64>) -> Result<(Self, f64, f64)> {
        let n = t.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 samples, got {n}"
            )));
        }
        let step = (t[n - 1] - t[0]) / (n - 1) as f64;
        if !(step > 0.0) {
            return Err(Error::InvalidInput("grid is not ascending".into()));
        }
        for (i, w) in t.windows(2).enumerate() {
            if (((w[1] - w[0]) - step) / step).abs() > 1e-6 {
                return Err(Error::InvalidInput(format!(
                    "non-uniform spacing between samples {i} and {}",
                    i + 1
                )));
            }
        }
        // t_i = t_0 + (i-1) step  <->  u_i = i / N
        let scale = step * n as f64;
        let offset = t[0] - step;
        let series = Self::from_values(y)?;
        Ok((series, offset, scale))
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.t[0], self.t[self.t.len() - 1])
    }

    /// Same grid, new observations.
    pub fn with_values(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.len() {
            return Err(Error::InvalidInput("length mismatch".into()));
        }
        Ok(Self {
            t: self.t.clone(),
            y,
            delta: self.delta,
        })
    }
}
