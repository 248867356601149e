//! Banded convex quadratic programs with sign constraints
//!
//! ```text
//!     minimize   1/2 x'Qx - b'x
//!     subject to A x >= 0
//! ```
//!
//! where `Q` is banded positive definite and each row of `A` touches a few
//! consecutive coefficients. Both solvers work on the dual, a
//! non-negativity constrained problem in the multipliers:
//!
//! ```text
//!     M = A Q^-1 A',   q = A Q^-1 b,   w = M mu + q >= 0,   mu >= 0,   mu'w = 0
//! ```
//!
//! with the primal recovered as `x = Q^-1 (b + A' mu)`.

mod active_set;
mod psor;

pub use active_set::solve_active_set;
pub use psor::{solve_psor, PsorOptions};

use std::collections::HashMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::banded::{BandCholesky, SymBand};
use crate::error::{Error, Result};

/// One sparse constraint row: `values` start at column `first`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub first: usize,
    pub values: Vec<f64>,
}

impl ConstraintRow {
    pub fn new(first: usize, values: Vec<f64>) -> Self {
        Self { first, values }
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(&x[self.first..])
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Row scaled to unit max-norm (zero rows are left alone).
    pub fn normalized(&self) -> Self {
        let s = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if s > 0.0 {
            Self::new(self.first, self.values.iter().map(|v| v / s).collect())
        } else {
            self.clone()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandedQP {
    pub q: SymBand,
    pub b: Vec<f64>,
    pub rows: Vec<ConstraintRow>,
}

impl BandedQP {
    pub fn new(q: SymBand, b: Vec<f64>, rows: Vec<ConstraintRow>) -> Result<Self> {
        if q.dim() != b.len() {
            return Err(Error::InvalidInput(format!(
                "Q is {0}x{0} but b has {1} entries",
                q.dim(),
                b.len()
            )));
        }
        if let Some(r) = rows.iter().find(|r| r.first + r.values.len() > b.len()) {
            return Err(Error::InvalidInput(format!(
                "constraint row starting at {} overruns dimension {}",
                r.first,
                b.len()
            )));
        }
        Ok(Self { q, b, rows })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let qx = self.q.mul_vec(x);
        0.5 * dot(x, &qx) - dot(&self.b, x)
    }

    pub fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.dot(x)).collect()
    }

    /// `A' mu`.
    pub fn at_mul(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (r, m) in self.rows.iter().zip(mu) {
            for (k, v) in r.values.iter().enumerate() {
                out[r.first + k] += v * m;
            }
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Max-norm KKT residuals of a candidate `(x, mu)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `||Qx - b - A'mu||_inf`
    pub stationarity: f64,
    /// `max(0, -min (Ax)_j)`
    pub primal_feas: f64,
    /// `max(0, -min mu_j)`
    pub dual_feas: f64,
    /// `max |mu_j (Ax)_j|`
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_feas)
            .max(self.dual_feas)
            .max(self.complementarity)
    }

    /// All four residuals below `tol * (1 + ||b||_inf)`.
    pub fn accepted(&self, tol: f64, b: &[f64]) -> bool {
        let scale = 1.0 + b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.max() < tol * scale
    }
}

impl fmt::Display for KktResiduals {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "stationarity {:.3e}, primal {:.3e}, dual {:.3e}, complementarity {:.3e}",
            self.stationarity, self.primal_feas, self.dual_feas, self.complementarity
        )
    }
}

pub fn kkt_residuals(qp: &BandedQP, x: &[f64], mu: &[f64]) -> Result<KktResiduals> {
    if x.len() != qp.dim() || mu.len() != qp.n_constraints() {
        return Err(Error::InvalidInput(
            "dimension mismatch in KKT check".into(),
        ));
    }
    let qx = qp.q.mul_vec(x);
    let atmu = qp.at_mul(mu);
    let stationarity = qx
        .iter()
        .zip(&qp.b)
        .zip(&atmu)
        .map(|((a, b), c)| (a - b - c).abs())
        .fold(0.0, f64::max);
    let ax = qp.constraint_values(x);
    let primal_feas = ax.iter().fold(0.0f64, |m, v| m.max(-v));
    let dual_feas = mu.iter().fold(0.0f64, |m, v| m.max(-v));
    let complementarity = ax
        .iter()
        .zip(mu)
        .map(|(a, m)| (a * m).abs())
        .fold(0.0, f64::max);
    Ok(KktResiduals {
        stationarity,
        primal_feas,
        dual_feas,
        complementarity,
    })
}

/// Result of a QP solve. `mu` is indexed like `qp.rows`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub mu: Vec<f64>,
    pub active: Vec<usize>,
    pub iterations: usize,
    pub residuals: KktResiduals,
}

/// The dual problem over deduplicated constraint rows.
#[derive(Debug, Clone)]
pub struct DualQP {
    /// `M = A Q^-1 A'`
    pub m: DMatrix<f64>,
    /// `q = A Q^-1 b`
    pub q: Vec<f64>,
    /// Unconstrained minimizer `Q^-1 b`.
    pub x_unc: Vec<f64>,
    /// Columns of `Q^-1 A'`, one per unique row.
    qinv_at: Vec<Vec<f64>>,
    /// Original row index of each unique row.
    pub unique: Vec<usize>,
}

impl DualQP {
    pub fn new(qp: &BandedQP) -> Result<Self> {
        let chol = qp.q.cholesky()?;
        Ok(Self::with_factor(qp, &chol))
    }

    /// Reuses an existing factorization of `Q`.
    pub fn with_factor(qp: &BandedQP, chol: &BandCholesky) -> Self {
        let x_unc = chol.solve(&qp.b);
        let unique = dedup_rows(&qp.rows);
        let rows: Vec<&ConstraintRow> = unique.iter().map(|&i| &qp.rows[i]).collect();
        let qinv_at: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let mut col = vec![0.0; qp.dim()];
                col[r.first..r.first + r.values.len()].copy_from_slice(&r.values);
                chol.solve_in_place(&mut col);
                col
            })
            .collect();
        let k = rows.len();
        let mut m = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..=i {
                let v = rows[i].dot(&qinv_at[j]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        let q = rows.iter().map(|r| r.dot(&x_unc)).collect();
        Self {
            m,
            q,
            x_unc,
            qinv_at,
            unique,
        }
    }

    pub fn size(&self) -> usize {
        self.q.len()
    }

    /// `x = Q^-1 (b + A' mu)` for multipliers on the unique rows.
    pub fn recover_primal(&self, mu: &[f64]) -> Vec<f64> {
        let mut x = self.x_unc.clone();
        for (col, &m) in self.qinv_at.iter().zip(mu) {
            if m != 0.0 {
                for (xi, ci) in x.iter_mut().zip(col) {
                    *xi += m * ci;
                }
            }
        }
        x
    }

    /// `w = M mu + q`, the constraint values at the recovered primal.
    pub fn slack(&self, mu: &[f64]) -> Vec<f64> {
        (0..self.size())
            .map(|i| {
                self.q[i]
                    + (0..self.size())
                        .map(|j| self.m[(i, j)] * mu[j])
                        .sum::<f64>()
            })
            .collect()
    }

    /// Expands multipliers on the unique rows to all `n_rows` rows; duplicates
    /// get zero.
    pub fn expand(&self, mu: &[f64], n_rows: usize) -> Vec<f64> {
        let mut full = vec![0.0; n_rows];
        for (&i, &m) in self.unique.iter().zip(mu) {
            full[i] = m;
        }
        full
    }
}

/// Indices of the first occurrence of every distinct constraint, comparing
/// rows after trimming zeros and scaling to unit max-norm.
pub fn dedup_rows(rows: &[ConstraintRow]) -> Vec<usize> {
    let mut seen: HashMap<(usize, Vec<i64>), usize> = HashMap::new();
    let mut unique = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let r = row.normalized();
        let lead = r.values.iter().position(|v| v.abs() > 1e-12);
        let Some(lead) = lead else {
            // all-zero row: trivially satisfied, keep one for bookkeeping
            if seen.insert((usize::MAX, Vec::new()), i).is_none() {
                unique.push(i);
            }
            continue;
        };
        let trail = r
            .values
            .iter()
            .rposition(|v| v.abs() > 1e-12)
            .unwrap_or(lead);
        let key: Vec<i64> = r.values[lead..=trail]
            .iter()
            .map(|v| (v * 1e9).round() as i64)
            .collect();
        if let std::collections::hash_map::Entry::Vacant(e) = seen.entry((r.first + lead, key)) {
            e.insert(i);
            unique.push(i);
        }
    }
    unique
}

pub(crate) fn finish(
    qp: &BandedQP,
    dual: &DualQP,
    mu_unique: &[f64],
    iterations: usize,
) -> Result<QpSolution> {
    let x = dual.recover_primal(mu_unique);
    let mu = dual.expand(mu_unique, qp.n_constraints());
    let residuals = kkt_residuals(qp, &x, &mu)?;
    let active = mu
        .iter()
        .enumerate()
        .filter(|(_, m)| **m > 0.0)
        .map(|(i, _)| i)
        .collect();
    Ok(QpSolution {
        x,
        mu,
        active,
        iterations,
        residuals,
    })
}
