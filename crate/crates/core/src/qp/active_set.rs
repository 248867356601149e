use super::{finish, kkt_residuals, BandedQP, DualQP, QpSolution};
use crate::error::{Error, Result};

/// Exact solve by a primal active-set method on the dual.
///
/// The working set holds the multipliers allowed to be positive. Each outer
/// step frees the most violated constraint (most negative `w_j`); when the
/// subspace minimizer leaves the orthant, the step is cut at the first
/// multiplier to reach zero and that multiplier is dropped. The factorization
/// of `Q` is computed once, and the Cholesky factor of the working block of
/// the dual Hessian is updated in place as constraints enter and leave.
pub fn solve_active_set(qp: &BandedQP, tol: f64) -> Result<QpSolution> {
    let dual = DualQP::new(qp)?;
    let k = dual.size();
    let cap = 10 * qp.n_constraints() + 100;
    let scale = 1.0 + dual.x_unc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let w_tol = tol * scale;

    let mut mu = vec![0.0; k];
    let mut free: Vec<usize> = Vec::new();
    let mut in_free = vec![false; k];
    // Rows whose entry would make the working block singular; cleared on
    // every removal.
    let mut blocked = vec![false; k];
    let mut factor = UpdatedCholesky::default();
    let mut iterations = 0;

    let fail = |mu: &[f64], iterations: usize| -> Error {
        let x = dual.recover_primal(mu);
        let mu_full = dual.expand(mu, qp.n_constraints());
        let residuals = kkt_residuals(qp, &x, &mu_full).unwrap_or_default();
        Error::NonConvergence {
            iterations,
            x,
            mu: mu_full,
            residuals,
        }
    };

    loop {
        iterations += 1;
        if iterations > cap {
            return Err(fail(&mu, iterations - 1));
        }
        let w = sparse_slack(&dual, &mu, &free);
        let candidate = (0..k)
            .filter(|&j| !in_free[j] && !blocked[j])
            .min_by(|&a, &b| w[a].total_cmp(&w[b]).then(a.cmp(&b)));
        let j = match candidate {
            Some(j) if w[j] < -w_tol => j,
            _ => break,
        };
        let col: Vec<f64> = free.iter().map(|&i| dual.m[(i, j)]).collect();
        if !factor.push(&col, dual.m[(j, j)]) {
            blocked[j] = true;
            continue;
        }
        free.push(j);
        in_free[j] = true;
        loop {
            let rhs: Vec<f64> = free.iter().map(|&i| -dual.q[i]).collect();
            let z = factor.solve(&rhs);
            if !z.iter().all(|v| v.is_finite()) {
                return Err(fail(&mu, iterations));
            }
            if z.iter().all(|&v| v > 0.0) {
                for (&i, &v) in free.iter().zip(&z) {
                    mu[i] = v;
                }
                break;
            }
            // Cut the step at the first multiplier to hit zero.
            let mut alpha = f64::INFINITY;
            let mut blocking = None;
            for (&i, &zi) in free.iter().zip(&z) {
                if zi <= 0.0 {
                    let a = mu[i] / (mu[i] - zi);
                    if a < alpha {
                        alpha = a;
                        blocking = Some(i);
                    }
                }
            }
            let alpha = alpha.min(1.0);
            for (&i, &zi) in free.iter().zip(&z) {
                mu[i] += alpha * (zi - mu[i]);
            }
            if let Some(b) = blocking {
                mu[b] = 0.0;
            }
            let mut pos = free.len();
            while pos > 0 {
                pos -= 1;
                let i = free[pos];
                if !(mu[i] > 0.0) {
                    mu[i] = 0.0;
                    free.remove(pos);
                    in_free[i] = false;
                    factor.remove(pos);
                }
            }
            blocked.iter_mut().for_each(|b| *b = false);
            iterations += 1;
            if iterations > cap {
                return Err(fail(&mu, iterations - 1));
            }
            if free.is_empty() {
                break;
            }
        }
    }
    finish(qp, &dual, &mu, iterations)
}

/// `w = q + M mu`, using that only working-set multipliers are nonzero.
fn sparse_slack(dual: &DualQP, mu: &[f64], free: &[usize]) -> Vec<f64> {
    let mut w = dual.q.clone();
    for &i in free {
        let col = dual.m.column(i);
        for (wj, mj) in w.iter_mut().zip(col.iter()) {
            *wj += mu[i] * mj;
        }
    }
    w
}

/// Lower Cholesky factor of a symmetric positive definite matrix that grows
/// by bordering and shrinks by deleting a row and column.
#[derive(Debug, Default)]
struct UpdatedCholesky {
    /// Row `r` holds `r + 1` entries.
    rows: Vec<Vec<f64>>,
}

impl UpdatedCholesky {
    fn len(&self) -> usize {
        self.rows.len()
    }

    fn forward(&self, b: &[f64]) -> Vec<f64> {
        let mut y = Vec::with_capacity(b.len());
        for (r, row) in self.rows.iter().enumerate() {
            let s: f64 = row[..r].iter().zip(&y).map(|(a, b)| a * b).sum();
            y.push((b[r] - s) / row[r]);
        }
        y
    }

    /// Borders the factor with a new column `col` and diagonal `diag`.
    /// Returns false, leaving the factor unchanged, when the result would be
    /// numerically singular.
    fn push(&mut self, col: &[f64], diag: f64) -> bool {
        let mut l = self.forward(col);
        let d2 = diag - l.iter().map(|v| v * v).sum::<f64>();
        if !(d2 > 1e-12 * diag.abs()) {
            return false;
        }
        l.push(d2.sqrt());
        self.rows.push(l);
        true
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = self.forward(b);
        for r in (0..self.len()).rev() {
            x[r] /= self.rows[r][r];
            let xr = x[r];
            for (c, v) in self.rows[r][..r].iter().enumerate() {
                x[c] -= v * xr;
            }
        }
        x
    }

    /// Deletes row and column `p`, restoring triangular form with Givens
    /// rotations on neighbouring columns.
    fn remove(&mut self, p: usize) {
        self.rows.remove(p);
        for r in p..self.len() {
            // Row r now spans columns 0..=r+1; rotate columns r and r+1 in
            // rows r.. so that entry (r, r+1) vanishes.
            let (a, b) = (self.rows[r][r], self.rows[r][r + 1]);
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            for row in &mut self.rows[r..] {
                let (x, y) = (row[r], row[r + 1]);
                row[r] = c * x + s * y;
                row[r + 1] = -s * x + c * y;
            }
            self.rows[r].truncate(r + 1);
        }
    }
}
