//! Dense reference computations shared by the integration suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pcfit_core::banded::SymBand;
use pcfit_core::qp::{BandedQP, ConstraintRow};
use pcfit_core::simulate::replicate_rng;
use pcfit_core::splines::{basis_row, SplineBasis};
use pcfit_core::SampleSeries;
use rand::Rng;
use rand_distr::StandardNormal;

/// Dense `N x n_basis` design matrix built point by point.
pub fn dense_design(basis: &SplineBasis, t: &[f64]) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(t.len(), basis.n_basis());
    for (i, &ti) in t.iter().enumerate() {
        let (first, vals) = basis_row(basis.knots(), basis.degree(), ti, 0);
        for (k, v) in vals.iter().enumerate() {
            b[(i, first + k)] = *v;
        }
    }
    b
}

/// Four-point Gauss-Legendre rule on `[-1, 1]`, exact to degree 7.
const GL4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_86),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_86),
];

/// Dense square root `R` of the roughness penalty, `Omega = R'R`: one row
/// `sqrt(w) B^(m)(u)` per quadrature node on every knot span. Exact while
/// `2 (degree - m) <= 7`.
pub fn dense_penalty_root(basis: &SplineBasis, m: usize) -> DMatrix<f64> {
    let knots = basis.knots();
    let d = basis.degree();
    assert!(2 * (d - m) <= 7, "four-point rule is not exact here");
    let spans: Vec<(f64, f64)> = knots
        .windows(2)
        .map(|w| (w[0], w[1]))
        .filter(|(a, b)| b > a)
        .collect();
    let mut r = DMatrix::zeros(4 * spans.len(), basis.n_basis());
    for (s, (a, b)) in spans.iter().enumerate() {
        let half = 0.5 * (b - a);
        for (q, (x, w)) in GL4.iter().enumerate() {
            let (first, vals) = basis_row(knots, d, a + half * (1.0 + x), m);
            for (k, v) in vals.iter().enumerate() {
                r[(4 * s + q, first + k)] = (w * half).sqrt() * v;
            }
        }
    }
    r
}

pub fn dense_penalty(basis: &SplineBasis, m: usize) -> DMatrix<f64> {
    let r = dense_penalty_root(basis, m);
    r.transpose() * r
}

/// Minimizer of `||y - B c||^2 + N lambda ||R c||^2` by SVD least squares
/// on the stacked system `[B; sqrt(N lambda) R] c ~ [y; 0]`.
pub fn dense_fit(b: &DMatrix<f64>, root: &DMatrix<f64>, y: &[f64], lambda: f64) -> DVector<f64> {
    let n = y.len();
    let (nr, nb) = root.shape();
    let mut a = DMatrix::zeros(n + nr, nb);
    a.view_mut((0, 0), (n, nb)).copy_from(b);
    a.view_mut((n, 0), (nr, nb))
        .copy_from(&(root * (n as f64 * lambda).sqrt()));
    let mut rhs = DVector::zeros(n + nr);
    rhs.rows_mut(0, n).copy_from_slice(y);
    a.svd(true, true).solve(&rhs, 0.0).expect("svd solve")
}

/// Trace of the smoother `B (B'B + N lambda Omega)^-1 B'`.
pub fn dense_trace(b: &DMatrix<f64>, omega: &DMatrix<f64>, lambda: f64) -> f64 {
    let n = b.nrows() as f64;
    let q = b.transpose() * b + omega * (n * lambda);
    let s = b * q.try_inverse().expect("invertible") * b.transpose();
    s.trace()
}

pub fn normals(seed: u64, replicate: u64, n: usize) -> Vec<f64> {
    let mut rng = replicate_rng(seed, replicate);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Random SPD `Q = L L' + I` with band `bw`, a random `b`, and `k` random
/// sparse constraint rows of width up to `bw + 1`.
pub fn instance(seed: u64, dim: usize, bw: usize, k: usize) -> BandedQP {
    let mut rng = replicate_rng(seed, 0);
    let mut l = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        for j in i.saturating_sub(bw / 2)..=i {
            l[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let dense = &l * l.transpose() + DMatrix::identity(dim, dim);
    let mut q = SymBand::zeros(dim, bw);
    for i in 0..dim {
        for j in i.saturating_sub(bw)..=i {
            q.add(i, j, dense[(i, j)]);
        }
    }
    let b: Vec<f64> = (0..dim)
        .map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let rows = (0..k)
        .map(|_| {
            let width = rng.random_range(1..=bw + 1);
            let first = rng.random_range(0..=dim - width);
            ConstraintRow::new(
                first,
                (0..width).map(|_| rng.sample(StandardNormal)).collect(),
            )
        })
        .collect();
    BandedQP::new(q, b, rows).unwrap()
}

pub fn dense_q(qp: &BandedQP) -> DMatrix<f64> {
    let d = qp.q.to_dense();
    DMatrix::from_fn(qp.dim(), qp.dim(), |r, c| d[r][c])
}

pub fn dense_rows(qp: &BandedQP) -> DMatrix<f64> {
    DMatrix::from_fn(qp.n_constraints(), qp.dim(), |r, c| {
        let row = &qp.rows[r];
        if c >= row.first && c < row.first + row.values.len() {
            row.values[c - row.first]
        } else {
            0.0
        }
    })
}

/// Exhaustive oracle: for every subset `S` of constraints held with
/// equality, solve `[Q -A_S'; A_S 0] (x, mu) = (b, 0)`; keep the KKT point
/// (feasible, `mu >= 0`) with the smallest objective.
pub fn enumerate(qp: &BandedQP) -> Vec<f64> {
    let (q, a) = (dense_q(qp), dense_rows(qp));
    let n = qp.dim();
    let k = qp.n_constraints();
    let b = DVector::from_column_slice(&qp.b);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << k) {
        let s: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let size = n + s.len();
        let mut kkt = DMatrix::zeros(size, size);
        kkt.view_mut((0, 0), (n, n)).copy_from(&q);
        for (r, &i) in s.iter().enumerate() {
            for c in 0..n {
                kkt[(c, n + r)] = -a[(i, c)];
                kkt[(n + r, c)] = a[(i, c)];
            }
        }
        let mut rhs = DVector::zeros(size);
        rhs.rows_mut(0, n).copy_from(&b);
        let Some(sol) = kkt.svd(true, true).solve(&rhs, 1e-12).ok() else {
            continue;
        };
        let x = sol.rows(0, n).into_owned();
        let feasible = (&a * &x).iter().all(|v| *v >= -1e-9);
        let dual_ok = sol.rows(n, s.len()).iter().all(|v| *v >= -1e-9);
        if feasible && dual_ok {
            let obj = qp.objective(x.as_slice());
            if best.as_ref().is_none_or(|(o, _)| obj < *o) {
                best = Some((obj, x.as_slice().to_vec()));
            }
        }
    }
    best.expect("a convex QP with a feasible origin has a KKT point")
        .1
}

/// Residual sum of squares of the least-squares line plus one hinge
/// `(t - tau)_+`, from a dense SVD solve.
pub fn hinge_rss(series: &SampleSeries, tau: f64) -> f64 {
    let t = series.t();
    let x = DMatrix::from_fn(t.len(), 3, |r, c| match c {
        0 => 1.0,
        1 => t[r],
        _ => (t[r] - tau).max(0.0),
    });
    let y = DVector::from_column_slice(series.y());
    let coef = x.clone().svd(true, true).solve(&y, 1e-14).unwrap();
    (&x * coef - y).norm_squared()
}
