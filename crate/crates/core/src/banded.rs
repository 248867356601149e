//! Symmetric banded matrices and their Cholesky factorization.
//!
//! Storage is row-major lower band: entry `(i, i - k)` for `k = 0..=bw`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Half bandwidth.
    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> Option<usize> {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let k = r - c;
        (k <= self.bw).then_some(r * (self.bw + 1) + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.idx(i, j).map_or(0.0, |p| self.data[p])
    }

    /// Adds `v` to entry `(i, j)` (and implicitly `(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let p = self
            .idx(i, j)
            .unwrap_or_else(|| panic!("({i}, {j}) outside bandwidth {}", self.bw));
        self.data[p] += v;
    }

    /// `self + alpha * other`; bandwidth is the larger of the two.
    pub fn add_scaled(&self, alpha: f64, other: &SymBand) -> SymBand {
        assert_eq!(self.n, other.n);
        let bw = self.bw.max(other.bw);
        let mut out = SymBand::zeros(self.n, bw);
        for i in 0..self.n {
            for k in 0..=bw.min(i) {
                let j = i - k;
                out.data[i * (bw + 1) + k] = self.get(i, j) + alpha * other.get(i, j);
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            y[i] += row[0] * x[i];
            for k in 1..=self.bw.min(i) {
                let j = i - k;
                y[i] += row[k] * x[j];
                y[j] += row[k] * x[i];
            }
        }
        y
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// Cholesky factor `L` with `A = L L^T`.
    pub fn cholesky(&self) -> Result<BandCholesky> {
        let (n, bw) = (self.n, self.bw);
        let mut l = vec![0.0; n * (bw + 1)];
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = self.get(i, j);
                for k in j0.max(j.saturating_sub(bw))..j {
                    s -= l[i * (bw + 1) + (i - k)] * l[j * (bw + 1) + (j - k)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite { row: i, pivot: s });
                    }
                    l[i * (bw + 1)] = s.sqrt();
                } else {
                    l[i * (bw + 1) + (i - j)] = s / l[j * (bw + 1)];
                }
            }
        }
        Ok(BandCholesky { n, bw, l })
    }

    /// Number of pivots that fall below `rtol * max|diag|` during a
    /// factorization that skips such columns; an estimate of `n - rank`.
    pub fn rank_gap(&self, rtol: f64) -> usize {
        let (n, bw) = (self.n, self.bw);
        let scale = (0..n).map(|i| self.get(i, i).abs()).fold(0.0, f64::max);
        let thresh = rtol * scale.max(f64::MIN_POSITIVE);
        let mut l = vec![0.0; n * (bw + 1)];
        let mut gap = 0;
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = self.get(i, j);
                for k in j0..j {
                    s -= l[i * (bw + 1) + (i - k)] * l[j * (bw + 1) + (j - k)];
                }
                if i == j {
                    if s <= thresh {
                        gap += 1;
                        l[i * (bw + 1)] = 0.0;
                    } else {
                        l[i * (bw + 1)] = s.sqrt();
                    }
                } else {
                    let d = l[j * (bw + 1)];
                    l[i * (bw + 1) + (i - j)] = if d > 0.0 { s / d } else { 0.0 };
                }
            }
        }
        gap
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * (self.bw + 1) + (i - j)]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        assert_eq!(b.len(), n);
        for i in 0..n {
            let mut s = b[i];
            for j in i.saturating_sub(bw)..i {
                s -= self.at(i, j) * b[j];
            }
            b[i] = s / self.at(i, i);
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..(i + bw + 1).min(n) {
                s -= self.at(j, i) * b[j];
            }
            b[i] = s / self.at(i, i);
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Entries of `A^{-1}` inside the band, by the backward recursion
    /// `S_ij = (delta_ij / L_ii - sum_{k>i} L_ki S_kj) / L_ii`.
    pub fn band_inverse(&self) -> SymBand {
        let (n, bw) = (self.n, self.bw);
        let mut s = SymBand::zeros(n, bw);
        for i in (0..n).rev() {
            let lii = self.at(i, i);
            let kmax = (i + bw).min(n - 1);
            for j in (i..=kmax).rev() {
                let mut acc = if i == j { 1.0 / lii } else { 0.0 };
                for k in i + 1..=kmax {
                    acc -= self.at(k, i) * s.get(k, j);
                }
                let p = s.idx(i, j).expect("inside band");
                s.data[p] = acc / lii;
            }
        }
        s
    }
}

/// Banded least squares by Givens rotations: rows are absorbed one at a
/// time into an upper-triangular band factor `R` with `R x = Q'b`. Avoids
/// squaring the condition number as the normal equations do.
#[derive(Debug, Clone)]
pub struct BandQr {
    n: usize,
    bw: usize,
    /// Row `i` holds columns `i..=i + bw`.
    r: Vec<f64>,
    qtb: Vec<f64>,
    filled: Vec<bool>,
    /// Zeroed work row, reused across `add_row` calls.
    scratch: Vec<f64>,
}

impl BandQr {
    pub fn new(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            r: vec![0.0; n * (bw + 1)],
            qtb: vec![0.0; n],
            filled: vec![false; n],
            scratch: vec![0.0; n],
        }
    }

    /// Adds the row with entries `values` starting at column `first` and
    /// right-hand side `rhs`. Rows should arrive in order of `first`: a row
    /// landing on an already complete part of `R` fills in to the last
    /// column.
    pub fn add_row(&mut self, first: usize, values: &[f64], rhs: f64) {
        let w = self.bw + 1;
        assert!(values.len() <= w && first + values.len() <= self.n);
        // Rotations fill the row in to the right, up to `bw` past the
        // column being eliminated, so keep it in absolute columns.
        let mut row = std::mem::take(&mut self.scratch);
        row[first..first + values.len()].copy_from_slice(values);
        let mut right = first + values.len();
        let mut beta = rhs;
        let mut j = first;
        while j < right {
            let a = row[j];
            if a == 0.0 {
                j += 1;
                continue;
            }
            let width = w.min(self.n - j);
            let rj = &mut self.r[j * w..j * w + width];
            if !self.filled[j] {
                rj.copy_from_slice(&row[j..j + width]);
                self.qtb[j] = beta;
                self.filled[j] = true;
                right = right.max(j + width);
                break;
            }
            let d = rj[0];
            let h = d.hypot(a);
            let (c, s) = (d / h, a / h);
            for (k, y) in rj.iter_mut().enumerate() {
                let (x, r) = (row[j + k], *y);
                *y = c * r + s * x;
                row[j + k] = c * x - s * r;
            }
            let q = self.qtb[j];
            self.qtb[j] = c * q + s * beta;
            beta = c * beta - s * q;
            right = right.max(j + width);
            j += 1;
        }
        row[first..right].fill(0.0);
        self.scratch = row;
    }

    /// Back substitution. Diagonal entries below `rtol * max |R_ii|` count
    /// towards the reported rank gap.
    pub fn solve(&self, rtol: f64) -> Result<Vec<f64>> {
        let w = self.bw + 1;
        let scale = (0..self.n).map(|i| self.r[i * w].abs()).fold(0.0, f64::max);
        let gap = (0..self.n)
            .filter(|&i| !(self.r[i * w].abs() > rtol * scale))
            .count();
        if gap > 0 {
            return Err(Error::SingularSystem {
                rank_gap: gap,
                size: self.n,
            });
        }
        let mut x = vec![0.0; self.n];
        for i in (0..self.n).rev() {
            let row = &self.r[i * w..(i + 1) * w];
            let mut s = self.qtb[i];
            for k in 1..w.min(self.n - i) {
                s -= row[k] * x[i + k];
            }
            x[i] = s / row[0];
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn random_spd(n: usize, bw: usize, seed: u64) -> SymBand {
        let mut state = seed;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut a = SymBand::zeros(n, bw);
        for i in 0..n {
            for k in 1..=bw.min(i) {
                a.add(i, i - k, next());
            }
            a.add(i, i, bw as f64 * 2.0 + 1.0 + next());
        }
        a
    }

    #[test]
    fn cholesky_solve_matches_dense() {
        let a = random_spd(40, 3, 7);
        let dense = DMatrix::from_fn(40, 40, |i, j| a.get(i, j));
        let b: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let x = a.cholesky().unwrap().solve(&b);
        let xd = dense.lu().solve(&nalgebra::DVector::from_vec(b)).unwrap();
        for i in 0..40 {
            assert!((x[i] - xd[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn band_inverse_matches_dense_inverse() {
        let a = random_spd(30, 4, 11);
        let dense = DMatrix::from_fn(30, 30, |i, j| a.get(i, j));
        let inv = dense.try_inverse().unwrap();
        let s = a.cholesky().unwrap().band_inverse();
        for i in 0..30usize {
            for j in i.saturating_sub(4)..=i {
                assert!((s.get(i, j) - inv[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn not_positive_definite_is_reported() {
        let mut a = SymBand::zeros(3, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 1.0);
        a.add(1, 1, 1.0);
        a.add(2, 2, 1.0);
        assert!(matches!(
            a.cholesky(),
            Err(Error::NotPositiveDefinite { row: 1, .. })
        ));
        assert_eq!(a.rank_gap(1e-12), 1);
    }

    #[test]
    fn band_qr_matches_normal_equations() {
        // 3-banded rows, overdetermined
        let rows: Vec<(usize, Vec<f64>, f64)> = (0..60)
            .map(|i| {
                let first = (i / 3).min(17);
                let v = vec![
                    1.0 + (i as f64).sin(),
                    0.5 * (i as f64).cos(),
                    0.25 + 0.01 * i as f64,
                ];
                (first, v, (i as f64 * 0.3).sin())
            })
            .collect();
        let mut qr = BandQr::new(20, 2);
        let mut ata = SymBand::zeros(20, 2);
        let mut atb = vec![0.0; 20];
        for (first, v, b) in &rows {
            qr.add_row(*first, v, *b);
            for a in 0..3 {
                atb[first + a] += v[a] * b;
                for c in 0..=a {
                    ata.add(first + a, first + c, v[a] * v[c]);
                }
            }
        }
        let x = qr.solve(1e-13).unwrap();
        let xn = ata.cholesky().unwrap().solve(&atb);
        for i in 0..20 {
            assert!((x[i] - xn[i]).abs() < 1e-10, "{i}");
        }
        let mut short = BandQr::new(4, 1);
        short.add_row(0, &[1.0, 1.0], 1.0);
        assert!(matches!(
            short.solve(1e-13),
            Err(Error::SingularSystem {
                rank_gap: 3,
                size: 4
            })
        ));
    }

    #[test]
    fn mul_vec_matches_dense() {
        let a = random_spd(12, 2, 3);
        let x: Vec<f64> = (0..12).map(|i| i as f64 - 4.0).collect();
        let y = a.mul_vec(&x);
        for i in 0..12 {
            let yi: f64 = (0..12).map(|j| a.get(i, j) * x[j]).sum();
            assert!((y[i] - yi).abs() < 1e-12);
        }
    }
}
