use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SplineBasis;
use crate::error::{Error, Result};
use crate::series::SampleSeries;

pub const GCV_GRID_POINTS: usize = 61;
const GRID_LO: f64 = 1e-10;
const GRID_HI: f64 = 1e2;

/// GCV scores along a lambda grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcvCurve {
    pub lambdas: Vec<f64>,
    pub scores: Vec<f64>,
    /// `tr(S_lambda)` at each grid point.
    pub traces: Vec<f64>,
    pub rss: Vec<f64>,
    pub best: usize,
}

impl GcvCurve {
    pub fn best_lambda(&self) -> f64 {
        self.lambdas[self.best]
    }

    pub fn best_score(&self) -> f64 {
        self.scores[self.best]
    }
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

/// 61 log-spaced values from `min(1e-10, (delta/2)^(2m))` to `1e2`. The
/// lower end reaches the interpolation regime, the upper end the
/// polynomial (penalty null space) limit.
pub fn default_lambda_grid(n: usize, m: usize) -> Vec<f64> {
    let delta = 1.0 / n as f64;
    let lo = GRID_LO.min((0.5 * delta).powi(2 * m as i32));
    log_grid(lo, GRID_HI, GCV_GRID_POINTS)
}

/// One grid point: `(score, trace, rss)`.
pub(crate) fn gcv_point(
    basis: &SplineBasis,
    y: &[f64],
    rhs: &[f64],
    lambda: f64,
) -> (f64, f64, f64) {
    let n = basis.n_samples() as f64;
    let q = basis.gram().add_scaled(n * lambda, basis.penalty());
    let Ok(chol) = q.cholesky() else {
        return (f64::NAN, f64::NAN, f64::NAN);
    };
    let coeffs = chol.solve(rhs);
    let fitted = basis.fitted(&coeffs);
    let rss: f64 = fitted.iter().zip(y).map(|(f, y)| (y - f).powi(2)).sum();
    // tr(B Q^-1 B') = tr(Q^-1 G), needs only the band of Q^-1.
    let inv = chol.band_inverse();
    let g = basis.gram();
    let mut trace = 0.0;
    for i in 0..g.dim() {
        trace += inv.get(i, i) * g.get(i, i);
        for j in i.saturating_sub(g.bandwidth())..i {
            trace += 2.0 * inv.get(i, j) * g.get(i, j);
        }
    }
    let score = n * rss / (n - trace).powi(2);
    (score, trace, rss)
}

/// Minimizes `GCV(lambda) = N ||(I - S) y||^2 / tr(I - S)^2` over `grid`.
/// Grid points are evaluated in parallel; the result does not depend on the
/// evaluation order. Ties go to the first (smallest index) minimizer.
pub fn gcv_select_lambda(basis: &SplineBasis, y: &[f64], grid: &[f64]) -> Result<GcvCurve> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty lambda grid".into()));
    }
    let rhs = basis.rhs(y);
    let points: Vec<(f64, f64, f64)> = grid
        .par_iter()
        .map(|&lambda| gcv_point(basis, y, &rhs, lambda))
        .collect();
    let mut best: Option<usize> = None;
    for (k, p) in points.iter().enumerate() {
        if p.0.is_finite() && best.is_none_or(|b: usize| p.0 < points[b].0) {
            best = Some(k);
        }
    }
    let best = best.ok_or(Error::DegenerateData)?;
    Ok(GcvCurve {
        lambdas: grid.to_vec(),
        scores: points.iter().map(|p| p.0).collect(),
        traces: points.iter().map(|p| p.1).collect(),
        rss: points.iter().map(|p| p.2).collect(),
        best,
    })
}

/// GCV with the default basis and grid for `series`.
pub fn gcv_for_series(series: &SampleSeries, m: usize) -> Result<(SplineBasis, GcvCurve)> {
    let basis = SplineBasis::for_series(series, m)?;
    let curve = gcv_select_lambda(&basis, series.y(), &default_lambda_grid(series.len(), m))?;
    Ok((basis, curve))
}
