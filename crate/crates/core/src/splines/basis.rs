//! B-spline knot vectors and basis evaluation (de Boor / Cox recursion with
//! derivatives).

/// Index `s` of the knot span with `knots[s] <= u < knots[s + 1]`, clamped to
/// the last non-empty span at the right end of the domain.
pub fn find_span(knots: &[f64], degree: usize, u: f64) -> usize {
    let n_basis = knots.len() - degree - 1;
    if u >= knots[n_basis] {
        let mut s = n_basis - 1;
        while s > degree && knots[s] >= knots[n_basis] {
            s -= 1;
        }
        return s;
    }
    if u <= knots[degree] {
        return degree;
    }
    // last s with knots[s] <= u
    let s = knots.partition_point(|&k| k <= u) - 1;
    s.clamp(degree, n_basis - 1)
}

/// Derivatives `0..=n_ders` of the `degree + 1` basis functions that are
/// non-zero on `span`; `out[k][j]` is the `k`-th derivative of basis
/// function `span - degree + j`. Derivatives above the degree are zero.
pub fn basis_derivatives(
    knots: &[f64],
    degree: usize,
    span: usize,
    u: f64,
    n_ders: usize,
) -> Vec<Vec<f64>> {
    let p = degree;
    let mut ndu = vec![vec![0.0; p + 1]; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = u - knots[span + 1 - j];
        right[j] = knots[span + j] - u;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }

    let mut ders = vec![vec![0.0; p + 1]; n_ders + 1];
    for j in 0..=p {
        ders[0][j] = ndu[j][p];
    }
    let nd = n_ders.min(p);
    let mut a = [vec![0.0; p + 1], vec![0.0; p + 1]];
    for r in 0..=p {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = 1.0;
        for k in 1..=nd {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = p - k;
            if r >= k {
                let rk = rk as usize;
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                d = a[s2][0] * ndu[rk][pk];
            }
            let j1: usize = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2: usize = if r as isize - 1 <= pk as isize {
                k - 1
            } else {
                p - r
            };
            for j in j1..=j2 {
                let col = (rk + j as isize) as usize;
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][col];
                d += a[s2][j] * ndu[col][pk];
            }
            if r <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut factor = p as f64;
    for (k, row) in ders.iter_mut().enumerate().take(nd + 1).skip(1) {
        for v in row.iter_mut() {
            *v *= factor;
        }
        factor *= (p - k) as f64;
    }
    ders
}

/// Clamped knot vector: boundary knots repeated `degree + 1` times around the
/// given strictly interior knots.
pub fn clamped_knots(lo: f64, hi: f64, interior: &[f64], degree: usize) -> Vec<f64> {
    let mut knots = Vec::with_capacity(interior.len() + 2 * (degree + 1));
    knots.extend(std::iter::repeat_n(lo, degree + 1));
    knots.extend(interior.iter().copied().filter(|&k| k > lo && k < hi));
    knots.extend(std::iter::repeat_n(hi, degree + 1));
    knots
}
