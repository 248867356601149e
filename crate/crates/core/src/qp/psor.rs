use super::{finish, kkt_residuals, BandedQP, DualQP, QpSolution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsorOptions {
    /// Relaxation factor in `(0, 2)`.
    pub omega: f64,
    /// Stop when the largest multiplier change in a sweep is below
    /// `tol * (1 + max |mu|)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PsorOptions {
    fn default() -> Self {
        Self {
            omega: 1.5,
            tol: 1e-9,
            max_iter: 10_000,
        }
    }
}

/// Projected successive over-relaxation on the dual complementarity problem:
/// `mu_i <- max(0, mu_i - omega (M mu + q)_i / M_ii)`, sweeping `i` in order.
pub fn solve_psor(qp: &BandedQP, opts: PsorOptions) -> Result<QpSolution> {
    if !(opts.omega > 0.0 && opts.omega < 2.0) {
        return Err(Error::InvalidInput(format!(
            "relaxation factor must lie in (0, 2), got {}",
            opts.omega
        )));
    }
    let dual = DualQP::new(qp)?;
    let k = dual.size();
    let mut mu = vec![0.0; k];
    for sweep in 1..=opts.max_iter {
        let mut max_change = 0.0f64;
        for i in 0..k {
            let mii = dual.m[(i, i)];
            if mii <= 0.0 {
                continue;
            }
            let mut r = dual.q[i];
            for (j, m) in mu.iter().enumerate() {
                r += dual.m[(i, j)] * m;
            }
            let next = (mu[i] - opts.omega * r / mii).max(0.0);
            max_change = max_change.max((next - mu[i]).abs());
            mu[i] = next;
        }
        let size = mu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max_change < opts.tol * (1.0 + size) {
            return finish(qp, &dual, &mu, sweep);
        }
    }
    let x = dual.recover_primal(&mu);
    let mu_full = dual.expand(&mu, qp.n_constraints());
    let residuals = kkt_residuals(qp, &x, &mu_full)?;
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        x,
        mu: mu_full,
        residuals,
    })
}
