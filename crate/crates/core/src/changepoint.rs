//! Empirical convexity change points of a pilot estimate, their variances
//! and the constraint regions handed to the second stage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::SampleSeries;

/// Two-sided 95% normal quantile.
pub const DEFAULT_Z_ALPHA: f64 = 1.959964;

/// Below this `|g^(ell+1)|` the variance formula is not evaluated.
pub const DEFAULT_CURVATURE_EPS: f64 = 1e-8;

/// A sign change of `g^(ell)` at `x`. `sign_after` is the implied sign of
/// `g^(ell+1)` there: `+1` for an upward crossing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub x: f64,
    pub sign_after: i8,
}

/// Zero crossings of a grid function `g_l` sampled on `grid`.
///
/// Crossings are located by linear interpolation between the bracketing grid
/// points. A run of exact zeros between values of opposite sign counts once,
/// at the midpoint of the run; a run of zeros between values of equal sign
/// (a touch) is not a crossing.
pub fn detect_change_points(g_l: &[f64], grid: &[f64]) -> Result<Vec<Crossing>> {
    if g_l.len() != grid.len() {
        return Err(Error::InvalidInput(
            "grid function and grid lengths differ".into(),
        ));
    }
    if grid.len() < 3 {
        return Err(Error::InvalidInput("need at least 3 grid points".into()));
    }
    let mut out = Vec::new();
    // last index with a non-zero value
    let mut prev: Option<usize> = None;
    for (i, &v) in g_l.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        if let Some(p) = prev {
            let pv = g_l[p];
            if (pv < 0.0) != (v < 0.0) {
                let x = if i == p + 1 {
                    let frac = pv / (pv - v);
                    grid[p] + frac * (grid[i] - grid[p])
                } else {
                    0.5 * (grid[p + 1] + grid[i - 1])
                };
                out.push(Crossing {
                    x,
                    sign_after: if v > 0.0 { 1 } else { -1 },
                });
            }
        }
        prev = Some(i);
    }
    Ok(out)
}

/// Zeroes entries below `rtol * max|values|`, so that values that vanish
/// analytically but carry rounding noise do not produce crossings.
pub fn snap_to_zero(values: &[f64], rtol: f64) -> Vec<f64> {
    snap_to_zero_with_floor(values, rtol, 0.0)
}

/// [`snap_to_zero`] that also zeroes entries at or below `floor`. Needed when
/// the values are all rounding noise, e.g. derivatives of a constant fit.
pub fn snap_to_zero_with_floor(values: &[f64], rtol: f64, floor: f64) -> Vec<f64> {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cut = (rtol * scale).max(floor);
    values
        .iter()
        .map(|&v| if v.abs() <= cut { 0.0 } else { v })
        .collect()
}

/// Number of sign changes among the non-zero entries.
pub fn count_sign_changes(values: &[f64]) -> usize {
    let mut count = 0;
    let mut prev = 0.0f64;
    for &v in values.iter().filter(|v| **v != 0.0) {
        if prev != 0.0 && (prev < 0.0) != (v < 0.0) {
            count += 1;
        }
        prev = v;
    }
    count
}

/// `c sigma^2 / (|g_{ell+1}|^2 N h^(2 ell + 3))`.
pub fn change_point_variance(
    g_lp1_at_xk: f64,
    sigma2: f64,
    n: usize,
    h: f64,
    c: f64,
    ell: usize,
) -> Result<f64> {
    change_point_variance_with_exponent(g_lp1_at_xk, sigma2, n, h, c, (2 * ell + 3) as f64)
}

/// Variance formula with an explicit halfwidth exponent.
pub fn change_point_variance_with_exponent(
    g_lp1_at_xk: f64,
    sigma2: f64,
    n: usize,
    h: f64,
    c: f64,
    exponent: f64,
) -> Result<f64> {
    if g_lp1_at_xk.abs() < DEFAULT_CURVATURE_EPS || !g_lp1_at_xk.is_finite() {
        return Err(Error::FlatCurvature {
            value: g_lp1_at_xk.abs(),
            threshold: DEFAULT_CURVATURE_EPS,
        });
    }
    if !(h > 0.0 && c > 0.0 && sigma2 >= 0.0 && n > 0) {
        return Err(Error::InvalidInput(format!(
            "variance needs h, c > 0 and sigma2 >= 0 (h = {h}, c = {c}, sigma2 = {sigma2})"
        )));
    }
    Ok(c * sigma2 / (g_lp1_at_xk.powi(2) * n as f64 * h.powf(exponent)))
}

/// `sum (y_{i+1} - 2 y_i + y_{i-1})^2 / (6 (N - 2))`.
pub fn noise_variance_estimate(series: &SampleSeries) -> Result<f64> {
    let y = series.y();
    if y.len() < 3 {
        return Err(Error::InvalidInput("need at least 3 samples".into()));
    }
    let ss: f64 = y
        .windows(3)
        .map(|w| (w[2] - 2.0 * w[1] + w[0]).powi(2))
        .sum();
    Ok(ss / (6.0 * (y.len() - 2) as f64))
}

/// One detected change point with its variance and constraint interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangePoint {
    pub x: f64,
    pub sign_after: i8,
    /// Pilot estimate of `g^(ell+1)` at `x`.
    #[serde(default)]
    pub g_lp1: f64,
    pub sigma2: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Input record for [`constraint_intervals`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChangePointEstimate {
    pub x: f64,
    pub sign_after: i8,
    pub g_lp1: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePointSet {
    pub ell: usize,
    pub z_alpha: f64,
    pub points: Vec<ChangePoint>,
}

impl ChangePointSet {
    pub fn empty(ell: usize, z_alpha: f64) -> Self {
        Self {
            ell,
            z_alpha,
            points: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Change points strictly inside `[lo + margin, hi - margin]`.
    pub fn interior_count(&self, domain: (f64, f64), margin: f64) -> usize {
        self.points
            .iter()
            .filter(|p| p.x > domain.0 + margin && p.x < domain.1 - margin)
            .count()
    }
}

/// Builds `[x - z sigma, x + z sigma]` around each point, clips to `domain`
/// and resolves overlaps.
///
/// Overlapping neighbours of opposite sign are shrunk to abut at the
/// midpoint of their overlap, clamped to `[x_k, x_{k+1}]` so each interval
/// keeps its own centre. Neighbours of equal sign are inconsistent.
pub fn constraint_intervals(
    points: &[ChangePointEstimate],
    ell: usize,
    z_alpha: f64,
    domain: (f64, f64),
) -> Result<ChangePointSet> {
    if !(z_alpha > 0.0) {
        return Err(Error::InvalidInput(format!(
            "z_alpha must be positive, got {z_alpha}"
        )));
    }
    if points.windows(2).any(|w| w[1].x < w[0].x) {
        return Err(Error::InvalidInput("change points must be sorted".into()));
    }
    let mut out: Vec<ChangePoint> = points
        .iter()
        .map(|p| {
            let r = z_alpha * p.sigma2.max(0.0).sqrt();
            ChangePoint {
                x: p.x,
                sign_after: p.sign_after,
                g_lp1: p.g_lp1,
                sigma2: p.sigma2,
                lo: (p.x - r).max(domain.0),
                hi: (p.x + r).min(domain.1),
            }
        })
        .collect();
    for k in 1..out.len() {
        let (left, right) = (out[k - 1], out[k]);
        if left.sign_after == right.sign_after {
            return Err(Error::InconsistentGeometry {
                left: left.x,
                right: right.x,
            });
        }
        if left.hi > right.lo {
            let mid = (0.5 * (right.lo + left.hi)).clamp(left.x, right.x);
            out[k - 1].hi = mid;
            out[k].lo = mid;
        }
    }
    Ok(ChangePointSet {
        ell,
        z_alpha,
        points: out,
    })
}

/// Which derivative a constraint point signs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// `sign * g^(ell+1)(z) >= 0` inside a change-point interval.
    #[default]
    Crossing,
    /// `sign * g^(ell)(z) >= 0` in the gap between intervals.
    Gap,
}

/// A point where the sign of `g^(ell+1)` (or `g^(ell)` in a gap) is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintPoint {
    pub z: f64,
    pub sign: i8,
    /// Index of the change point whose interval produced this point, or of
    /// the gap (gap `k` lies just left of interval `k`).
    pub interval: usize,
    #[serde(default)]
    pub kind: ConstraintKind,
}

/// One region with a single enforced sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignRegion {
    pub lo: f64,
    pub hi: f64,
    pub sign: i8,
    pub index: usize,
    pub kind: ConstraintKind,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub points: Vec<ConstraintPoint>,
}

impl ConstraintSpec {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn in_interval(&self, k: usize) -> impl Iterator<Item = &ConstraintPoint> {
        self.in_region(k, ConstraintKind::Crossing)
    }

    pub fn in_region(
        &self,
        k: usize,
        kind: ConstraintKind,
    ) -> impl Iterator<Item = &ConstraintPoint> {
        self.points
            .iter()
            .filter(move |p| p.interval == k && p.kind == kind)
    }

    /// Sorts by kind, region and position.
    pub fn sort(&mut self) {
        self.points.sort_by(|a, b| {
            (a.kind as u8, a.interval)
                .cmp(&(b.kind as u8, b.interval))
                .then(a.z.total_cmp(&b.z))
        });
    }
}

/// Constraint points for every interval: the data points inside it together
/// with `density` uniformly spaced points, deduplicated. A zero-width interval
/// yields its centre.
pub fn place_constraint_points(
    set: &ChangePointSet,
    grid: &[f64],
    density: usize,
) -> Result<ConstraintSpec> {
    if density < 3 {
        return Err(Error::InvalidInput(format!(
            "density must be >= 3, got {density}"
        )));
    }
    let span = grid.last().copied().unwrap_or(1.0) - grid.first().copied().unwrap_or(0.0);
    let tol = 1e-9 * span.abs().max(1.0);
    let mut spec = ConstraintSpec::default();
    for (k, p) in set.points.iter().enumerate() {
        let mut zs: Vec<f64> = if p.hi - p.lo <= tol {
            vec![p.x]
        } else {
            let mut v: Vec<f64> = (0..density)
                .map(|j| p.lo + (p.hi - p.lo) * j as f64 / (density - 1) as f64)
                .collect();
            v.extend(
                grid.iter()
                    .copied()
                    .filter(|&t| t >= p.lo - tol && t <= p.hi + tol),
            );
            v
        };
        zs.sort_by(f64::total_cmp);
        zs.dedup_by(|a, b| (*a - *b).abs() <= tol);
        spec.points.extend(zs.into_iter().map(|z| ConstraintPoint {
            z,
            sign: p.sign_after,
            interval: k,
            kind: ConstraintKind::Crossing,
        }));
    }
    Ok(spec)
}

/// The gaps before, between and after the intervals of `set`, trimmed to
/// `[lo + margin, hi - margin]`, with the sign `g^(ell)` must keep there.
/// With no change points the single gap takes `sign_if_empty`; a zero sign
/// yields no gaps.
pub fn gap_regions(
    set: &ChangePointSet,
    domain: (f64, f64),
    margin: f64,
    sign_if_empty: i8,
) -> Vec<SignRegion> {
    let (lo, hi) = (domain.0 + margin, domain.1 - margin);
    let k = set.points.len();
    (0..=k)
        .filter_map(|g| {
            let left = if g == 0 {
                lo
            } else {
                set.points[g - 1].hi.max(lo)
            };
            let right = if g == k { hi } else { set.points[g].lo.min(hi) };
            let sign = if g < k {
                -set.points[g].sign_after
            } else if k > 0 {
                set.points[k - 1].sign_after
            } else {
                sign_if_empty
            };
            (sign != 0 && right > left).then_some(SignRegion {
                lo: left,
                hi: right,
                sign,
                index: g,
                kind: ConstraintKind::Gap,
            })
        })
        .collect()
}

/// Gap constraint points: the candidates inside each region plus its ends.
pub fn place_gap_points(regions: &[SignRegion], candidates: &[f64]) -> Vec<ConstraintPoint> {
    let mut out = Vec::new();
    for r in regions {
        let mut zs = vec![r.lo, r.hi];
        zs.extend(candidates.iter().copied().filter(|&t| t > r.lo && t < r.hi));
        zs.sort_by(f64::total_cmp);
        zs.dedup();
        out.extend(zs.into_iter().map(|z| ConstraintPoint {
            z,
            sign: r.sign,
            interval: r.index,
            kind: ConstraintKind::Gap,
        }));
    }
    out
}
