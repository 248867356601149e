//! Penalized B-spline smoothing.
//!
//! The fitted curve minimizes
//!
//! ```text
//!     (1/N) sum_i (y_i - g(t_i))^2 + lambda * int (g^(m)(t))^2 dt
//! ```
//!
//! so that `lambda = h^(2m)` for an effective halfwidth `h` on the unit
//! domain. In coefficient form this is `(B'B + N lambda Omega) c = B'y`, a
//! banded system of half bandwidth `degree`.

pub mod basis;
mod gcv;

pub use gcv::{
    default_lambda_grid, gcv_for_series, gcv_select_lambda, log_grid, GcvCurve, GCV_GRID_POINTS,
};

use serde::{Deserialize, Serialize};

use crate::banded::{BandQr, SymBand};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::series::SampleSeries;
use basis::{basis_derivatives, clamped_knots, find_span};

/// Above this many samples the automatic strategy stops placing a knot at
/// every data point.
pub const EVERY_POINT_KNOT_LIMIT: usize = 200;

/// Relative slack on the domain check in [`SplineModel::eval`].
const DOMAIN_SLACK: f64 = 1e-12;

/// A B-spline curve: clamped knots, coefficients and the penalty order it was
/// fitted with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineModel {
    pub degree: usize,
    pub knots: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub penalty_order: usize,
}

impl SplineModel {
    pub fn new(
        degree: usize,
        knots: Vec<f64>,
        coeffs: Vec<f64>,
        penalty_order: usize,
    ) -> Result<Self> {
        if knots.len() < 2 * (degree + 1) {
            return Err(Error::InvalidInput(
                "knot vector too short for degree".into(),
            ));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("knots must be non-decreasing".into()));
        }
        if coeffs.len() != knots.len() - degree - 1 {
            return Err(Error::InvalidInput(format!(
                "{} coefficients for {} basis functions",
                coeffs.len(),
                knots.len() - degree - 1
            )));
        }
        Ok(Self {
            degree,
            knots,
            coeffs,
            penalty_order,
        })
    }

    pub fn n_basis(&self) -> usize {
        self.coeffs.len()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[self.degree], self.knots[self.n_basis()])
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.knots[self.degree + 1..self.n_basis()]
    }

    /// Value of the `deriv`-th derivative at `t`.
    pub fn eval(&self, t: f64, deriv: usize) -> Result<f64> {
        let (lo, hi) = self.domain();
        let slack = DOMAIN_SLACK * (hi - lo).max(1.0);
        if !(t >= lo - slack && t <= hi + slack) {
            return Err(Error::OutsideDomain { t, lo, hi });
        }
        if deriv > self.degree {
            return Err(Error::InvalidInput(format!(
                "derivative {deriv} exceeds spline degree {}",
                self.degree
            )));
        }
        let (first, row) = basis_row(&self.knots, self.degree, t.clamp(lo, hi), deriv);
        Ok(row
            .iter()
            .zip(&self.coeffs[first..])
            .map(|(b, c)| b * c)
            .sum())
    }

    /// Evaluates on many points; points outside the domain yield an error.
    pub fn eval_many(&self, ts: &[f64], deriv: usize) -> Result<Vec<f64>> {
        ts.iter().map(|&t| self.eval(t, deriv)).collect()
    }
}

/// `(first basis index, values)` of the `deriv`-th derivative of the
/// `degree + 1` basis functions supported at `t`.
pub fn basis_row(knots: &[f64], degree: usize, t: f64, deriv: usize) -> (usize, Vec<f64>) {
    let span = find_span(knots, degree, t);
    let mut d = basis_derivatives(knots, degree, span, t, deriv);
    (span - degree, d.swap_remove(deriv))
}

/// Where interior knots go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KnotStrategy {
    /// Every data point for `N <= 200`, else `max(20, N/4)` quantile knots.
    #[default]
    Auto,
    EveryDataPoint,
    /// This many interior knots at data quantiles.
    Quantile(usize),
    Explicit(Vec<f64>),
}

impl KnotStrategy {
    /// Interior knots for the grid `t` (ascending).
    pub fn interior_knots(&self, t: &[f64]) -> Vec<f64> {
        let n = t.len();
        match self {
            KnotStrategy::Auto if n <= EVERY_POINT_KNOT_LIMIT => t[1..n - 1].to_vec(),
            KnotStrategy::Auto => quantile_knots(t, (n / 4).max(20)),
            KnotStrategy::EveryDataPoint => t[1..n - 1].to_vec(),
            KnotStrategy::Quantile(k) => quantile_knots(t, *k),
            KnotStrategy::Explicit(k) => k.clone(),
        }
    }
}

fn quantile_knots(t: &[f64], count: usize) -> Vec<f64> {
    let n = t.len();
    let mut out: Vec<f64> = (1..=count)
        .map(|k| {
            let pos = k as f64 / (count + 1) as f64 * (n - 1) as f64;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            if i + 1 < n {
                t[i] * (1.0 - frac) + t[i + 1] * frac
            } else {
                t[n - 1]
            }
        })
        .collect();
    out.dedup();
    out
}

/// Default spline degree for penalty order `m`.
pub fn default_degree(m: usize) -> usize {
    2 * m - 1
}

/// `h^(2m)`: the smoothing parameter whose effective halfwidth is `h`.
pub fn lambda_from_halfwidth(h: f64, m: usize) -> f64 {
    h.powi(2 * m as i32)
}

/// Inverse of [`lambda_from_halfwidth`].
pub fn halfwidth_from_lambda(lambda: f64, m: usize) -> f64 {
    lambda.powf(1.0 / (2 * m) as f64)
}

/// Design rows, Gram matrix and roughness penalty of one spline basis on one
/// sample grid. Everything that does not depend on `lambda` or `y`.
#[derive(Debug, Clone)]
pub struct SplineBasis {
    degree: usize,
    m: usize,
    knots: Vec<f64>,
    rows: Vec<(usize, Vec<f64>)>,
    gram: SymBand,
    penalty: SymBand,
}

impl SplineBasis {
    pub fn new(t: &[f64], m: usize, degree: usize, strategy: &KnotStrategy) -> Result<Self> {
        if m == 0 || m > degree {
            return Err(Error::InvalidInput(format!(
                "penalty order {m} must be in 1..={degree}"
            )));
        }
        if t.len() < 2 {
            return Err(Error::InvalidInput("need at least two samples".into()));
        }
        let (lo, hi) = (t[0], t[t.len() - 1]);
        let knots = clamped_knots(lo, hi, &strategy.interior_knots(t), degree);
        let nb = knots.len() - degree - 1;
        let rows: Vec<_> = t
            .iter()
            .map(|&ti| basis_row(&knots, degree, ti, 0))
            .collect();
        let mut gram = SymBand::zeros(nb, degree);
        for (first, vals) in &rows {
            for (a, va) in vals.iter().enumerate() {
                for (b, vb) in vals.iter().enumerate().take(a + 1) {
                    gram.add(first + a, first + b, va * vb);
                }
            }
        }
        let penalty = penalty_matrix(&knots, degree, m);
        Ok(Self {
            degree,
            m,
            knots,
            rows,
            gram,
            penalty,
        })
    }

    /// Basis with the default degree and knot strategy for `series`.
    pub fn for_series(series: &SampleSeries, m: usize) -> Result<Self> {
        Self::new(series.t(), m, default_degree(m), &KnotStrategy::Auto)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn penalty_order(&self) -> usize {
        self.m
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn n_samples(&self) -> usize {
        self.rows.len()
    }

    pub fn design_rows(&self) -> &[(usize, Vec<f64>)] {
        &self.rows
    }

    pub fn gram(&self) -> &SymBand {
        &self.gram
    }

    pub fn penalty(&self) -> &SymBand {
        &self.penalty
    }

    pub fn rhs(&self, y: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; self.n_basis()];
        for ((first, vals), yi) in self.rows.iter().zip(y) {
            for (k, v) in vals.iter().enumerate() {
                b[first + k] += v * yi;
            }
        }
        b
    }

    /// Penalized system for data `y` at smoothing level `lambda`.
    pub fn system(&self, y: &[f64], lambda: f64) -> PenalizedSystem {
        PenalizedSystem {
            gram: self.gram.clone(),
            penalty: self.penalty.clone(),
            rhs: self.rhs(y),
            lambda,
            n: self.n_samples(),
        }
    }

    /// Fitted values `B c`.
    pub fn fitted(&self, coeffs: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|(first, vals)| vals.iter().zip(&coeffs[*first..]).map(|(b, c)| b * c).sum())
            .collect()
    }

    pub fn model(&self, coeffs: Vec<f64>) -> SplineModel {
        SplineModel {
            degree: self.degree,
            knots: self.knots.clone(),
            coeffs,
            penalty_order: self.m,
        }
    }

    /// Unconstrained penalized fit at `lambda`, as the stacked least-squares
    /// problem `[B; sqrt(N lambda) R] c ~ [y; 0]` with `R'R = Omega`. Same
    /// solution as the normal equations, but well conditioned far into the
    /// `lambda -> infinity` limit.
    pub fn fit(&self, y: &[f64], lambda: f64) -> Result<SplineModel> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lambda must be >= 0, got {lambda}"
            )));
        }
        if y.len() != self.rows.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} observations, got {}",
                self.rows.len(),
                y.len()
            )));
        }
        let mut rows: Vec<(usize, Vec<f64>, f64)> = self
            .rows
            .iter()
            .zip(y)
            .map(|((first, vals), yi)| (*first, vals.clone(), *yi))
            .collect();
        if lambda > 0.0 {
            let scale = (self.n_samples() as f64 * lambda).sqrt();
            for (first, vals) in penalty_rows(&self.knots, self.degree, self.m) {
                rows.push((first, vals.iter().map(|v| scale * v).collect(), 0.0));
            }
        }
        // In column order each rotation stays inside the band; a row added
        // after R is complete would fill in all the way to the last column.
        rows.sort_by_key(|r| r.0);
        let mut qr = BandQr::new(self.n_basis(), self.degree);
        for (first, vals, rhs) in &rows {
            qr.add_row(*first, vals, *rhs);
        }
        Ok(self.model(qr.solve(1e-13)?))
    }
}

/// `B'B`, `Omega`, `B'y` and `lambda`; the matrix of the normal equations is
/// `B'B + N lambda Omega`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PenalizedSystem {
    pub gram: SymBand,
    pub penalty: SymBand,
    pub rhs: Vec<f64>,
    pub lambda: f64,
    pub n: usize,
}

impl PenalizedSystem {
    pub fn matrix(&self) -> SymBand {
        self.gram
            .add_scaled(self.n as f64 * self.lambda, &self.penalty)
    }

    pub fn solve(&self) -> Result<Vec<f64>> {
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        let q = self.matrix();
        match q.cholesky() {
            Ok(chol) => Ok(chol.solve(&self.rhs)),
            Err(Error::NotPositiveDefinite { .. }) => Err(Error::SingularSystem {
                rank_gap: q.rank_gap(1e-12).max(1),
                size: q.dim(),
            }),
            Err(e) => Err(e),
        }
    }
}

/// Rows `r_q = sqrt(w_q) B^(m)(u_q)` over Gauss-Legendre nodes `u_q` on
/// every knot span, so that `Omega = sum_q r_q r_q'` exactly.
pub fn penalty_rows(knots: &[f64], degree: usize, m: usize) -> Vec<(usize, Vec<f64>)> {
    let nb = knots.len() - degree - 1;
    if m > degree {
        return Vec::new();
    }
    let n_nodes = (2 * (degree - m) + 1).div_ceil(2) + 1;
    let (nodes, weights) = gauss_legendre(n_nodes);
    let mut rows = Vec::new();
    for span in degree..nb {
        let (a, b) = (knots[span], knots[span + 1]);
        if b <= a {
            continue;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in nodes.iter().zip(&weights) {
            let d = basis_derivatives(knots, degree, span, mid + half * x, m);
            let root = (w * half).sqrt();
            rows.push((span - degree, d[m].iter().map(|v| root * v).collect()));
        }
    }
    rows
}

/// `Omega_ab = int B_a^(m) B_b^(m) dt`, exact by Gauss-Legendre quadrature on
/// every knot span.
pub fn penalty_matrix(knots: &[f64], degree: usize, m: usize) -> SymBand {
    let nb = knots.len() - degree - 1;
    let mut omega = SymBand::zeros(nb, degree);
    for (first, vals) in penalty_rows(knots, degree, m) {
        for i in 0..vals.len() {
            for j in 0..=i {
                omega.add(first + i, first + j, vals[i] * vals[j]);
            }
        }
    }
    omega
}

/// Penalized smoothing spline fit with the default degree `2m - 1`.
pub fn fit_smoothing_spline(
    series: &SampleSeries,
    m: usize,
    lambda: f64,
    knots: &KnotStrategy,
) -> Result<SplineModel> {
    if series.len() < m {
        return Err(Error::InvalidInput(format!(
            "need at least m = {m} samples, got {}",
            series.len()
        )));
    }
    let basis = SplineBasis::new(series.t(), m, default_degree(m), knots)?;
    basis.fit(series.y(), lambda)
}
