//! Two-stage piecewise convex fitting.
//!
//! Stage 1 smooths with an inflated halfwidth `iota(N) * h_GCV` and reads off
//! the sign changes of `g^(ell)`. Stage 2 refits the smoothing spline at the
//! GCV level with `sign * g^(ell+1)(z_j) >= 0` imposed at a handful of points
//! `z_j` inside `[x_k - z_alpha sigma_k, x_k + z_alpha sigma_k]`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::changepoint::{
    change_point_variance_with_exponent, constraint_intervals, count_sign_changes,
    detect_change_points, gap_regions, noise_variance_estimate, place_constraint_points,
    place_gap_points, snap_to_zero, snap_to_zero_with_floor, ChangePointEstimate, ChangePointSet,
    ConstraintKind, ConstraintPoint, ConstraintSpec, SignRegion, DEFAULT_Z_ALPHA,
};
use crate::error::{Error, Result};
use crate::kernels::{kernel_smooth, KernelFamily, KernelSpec};
use crate::qp::{solve_active_set, solve_psor, BandedQP, ConstraintRow, KktResiduals, PsorOptions};
use crate::series::SampleSeries;
use crate::splines::{
    basis_row, default_lambda_grid, gcv_select_lambda, halfwidth_from_lambda,
    lambda_from_halfwidth, GcvCurve, SplineBasis, SplineModel,
};

/// KKT acceptance threshold, relative to `1 + ||b||_inf`.
pub const KKT_ACCEPT_TOL: f64 = 1e-6;

/// Pilot values of `g^(ell)` below this fraction of their maximum are
/// treated as zero.
pub const ROUNDOFF_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Stage1Backend {
    #[default]
    Spline,
    Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcfConfig {
    /// Convexity order: change points are sign changes of `g^(ell)`.
    pub ell: usize,
    /// Smoothness order; doubles as the spline penalty order.
    pub m: usize,
    pub stage1_backend: Stage1Backend,
    /// Kernel for the kernel backend and for the roughness constant `c`.
    pub kernel: KernelFamily,
    pub z_alpha: f64,
    /// Uniform constraint points per interval (on top of the data points).
    pub density: usize,
    pub gamma1: f64,
    pub gamma2: f64,
    pub iota_multiplier: f64,
    /// Stage-1 halfwidth cap as a fraction of the domain length.
    pub halfwidth_cap: f64,
    /// Noise variance; estimated from second differences when absent.
    pub sigma2: Option<f64>,
    /// Overrides the kernel roughness constant in the variance formula.
    pub roughness: Option<f64>,
    /// Overrides the halfwidth exponent `2 ell + 3` in the variance formula.
    pub variance_exponent: Option<f64>,
    /// Largest interval half-length, as a fraction of the domain length.
    /// Also used when the pilot curvature is too flat for the variance
    /// formula.
    pub max_interval_halfwidth: f64,
    /// Fixed stage-2 smoothing level instead of GCV.
    pub lambda: Option<f64>,
    /// Fixed stage-1 halfwidth instead of `iota(N) h_GCV`.
    pub stage1_halfwidth: Option<f64>,
    /// Pilot crossings closer than this fraction of the domain length to
    /// either end are ignored: a spline pilot has `g^(ell) = 0` at the ends
    /// when `ell >= m`, so its sign there is noise.
    pub boundary_margin: f64,
    /// Also fix the sign of `g^(ell)` between the intervals (outside the
    /// boundary margins), so the stage-2 fit has exactly the stage-1 change
    /// points. Off by default: only the intervals are constrained.
    #[serde(default)]
    pub constrain_gaps: bool,
    pub qp_tol: f64,
    /// Post-hoc check grid has this many points per constraint point.
    pub check_factor: usize,
    pub max_rounds: usize,
}

impl Default for PcfConfig {
    fn default() -> Self {
        Self {
            ell: 2,
            m: 2,
            stage1_backend: Stage1Backend::Spline,
            kernel: KernelFamily::Gaussian,
            z_alpha: DEFAULT_Z_ALPHA,
            density: 5,
            gamma1: 3.0,
            gamma2: 2.0,
            iota_multiplier: 1.0,
            halfwidth_cap: 0.5,
            sigma2: None,
            roughness: None,
            variance_exponent: None,
            max_interval_halfwidth: 0.1,
            lambda: None,
            stage1_halfwidth: None,
            boundary_margin: 0.05,
            constrain_gaps: false,
            qp_tol: 1e-9,
            check_factor: 10,
            max_rounds: 3,
        }
    }
}

impl PcfConfig {
    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("z_alpha", self.z_alpha),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("iota_multiplier", self.iota_multiplier),
            ("halfwidth_cap", self.halfwidth_cap),
            ("max_interval_halfwidth", self.max_interval_halfwidth),
            ("qp_tol", self.qp_tol),
        ];
        if let Some((name, v)) = reals.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "{name} must be positive, got {v}"
            )));
        }
        if !(0.0..0.5).contains(&self.boundary_margin) {
            return Err(Error::InvalidInput(format!(
                "boundary_margin must lie in [0, 0.5), got {}",
                self.boundary_margin
            )));
        }
        if self.m == 0 {
            return Err(Error::InvalidInput("m must be at least 1".into()));
        }
        if self.ell + 1 > 2 * self.m - 1 {
            return Err(Error::InvalidInput(format!(
                "g^(ell+1) with ell = {} is not defined for spline degree {}",
                self.ell,
                2 * self.m - 1
            )));
        }
        if self.ell + 1 != self.m && self.ell != self.m {
            warn!(
                "ell = {} is outside {{m - 1, m}} for m = {}; stage-1 scaling is heuristic",
                self.ell, self.m
            );
        }
        if self.density < 3 {
            return Err(Error::InvalidInput("density must be at least 3".into()));
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("stage1_halfwidth", self.stage1_halfwidth),
        ] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "{name} must be positive, got {v}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `(ln N)^2 N^alpha` with `alpha = 1/(2m+1) - 1/(2 ell + 3)`.
pub fn iota(n: usize, m: usize, ell: usize) -> f64 {
    iota_real(n as f64, m, ell)
}

/// [`iota`] for a real-valued sample count.
pub fn iota_real(n: f64, m: usize, ell: usize) -> f64 {
    let alpha = 1.0 / (2 * m + 1) as f64 - 1.0 / (2 * ell + 3) as f64;
    n.ln().powi(2) * n.powf(alpha)
}

/// `min(multiplier * iota(N) * h_gcv, cap)`.
pub fn stage1_halfwidth(h_gcv: f64, n: usize, config: &PcfConfig, domain_len: f64) -> f64 {
    let h = config.iota_multiplier * iota(n, config.m, config.ell) * h_gcv;
    h.min(config.halfwidth_cap * domain_len)
}

/// Pilot estimate on the data grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Estimate {
    pub backend: Stage1Backend,
    pub halfwidth: f64,
    /// Smoothing level of the spline backend (`halfwidth^(2m)`).
    pub lambda: Option<f64>,
    pub model: Option<SplineModel>,
    pub g: Vec<f64>,
    pub g_l: Vec<f64>,
    pub g_lp1: Vec<f64>,
    pub sigma2: f64,
    pub roughness: f64,
    pub retried: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub kkt: Option<KktResiduals>,
    pub kkt_accepted: bool,
    pub constraint_count: usize,
    pub active_count: usize,
    pub rounds: usize,
    pub solver: String,
    pub warnings: Vec<String>,
    pub gcv: GcvCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcfResult {
    pub stage1: Stage1Estimate,
    pub change_points: ChangePointSet,
    pub constraints: ConstraintSpec,
    pub stage2: SplineModel,
    pub lambda2: f64,
    pub diagnostics: Diagnostics,
}

impl PcfResult {
    /// Whether an inter-point violation survived densification.
    pub fn has_warnings(&self) -> bool {
        !self.diagnostics.warnings.is_empty()
    }
}

struct Prepared {
    basis: SplineBasis,
    gcv: GcvCurve,
}

fn prepare(series: &SampleSeries, config: &PcfConfig) -> Result<Prepared> {
    config.validate()?;
    if series.len() < 10 {
        return Err(Error::InvalidInput(format!(
            "need at least 10 samples, got {}",
            series.len()
        )));
    }
    let basis = SplineBasis::for_series(series, config.m)?;
    let grid = match config.lambda {
        Some(l) => vec![l],
        None => default_lambda_grid(series.len(), config.m),
    };
    let gcv = gcv_select_lambda(&basis, series.y(), &grid)?;
    Ok(Prepared { basis, gcv })
}

/// Stage 1: inflated-halfwidth pilot and its change points.
pub fn stage1(
    series: &SampleSeries,
    config: &PcfConfig,
) -> Result<(Stage1Estimate, ChangePointSet)> {
    let prep = prepare(series, config)?;
    stage1_with(series, config, &prep)
}

fn stage1_with(
    series: &SampleSeries,
    config: &PcfConfig,
    prep: &Prepared,
) -> Result<(Stage1Estimate, ChangePointSet)> {
    let (lo, hi) = series.domain();
    let h_gcv = halfwidth_from_lambda(prep.gcv.best_lambda(), config.m);
    let h1 = config
        .stage1_halfwidth
        .unwrap_or_else(|| stage1_halfwidth(h_gcv, series.len(), config, hi - lo));
    let sigma2 = match config.sigma2 {
        Some(s) => s,
        None => noise_variance_estimate(series)?,
    };
    let roughness = match config.roughness {
        Some(c) => c,
        None => KernelSpec::new(config.kernel, config.ell)?.roughness(),
    };
    match pilot(series, config, prep, h1, sigma2, roughness) {
        Err(Error::InconsistentGeometry { .. }) => {
            let h2 = (2.0 * h1).min(hi - lo);
            let (mut est, set) = pilot(series, config, prep, h2, sigma2, roughness)?;
            est.retried = true;
            Ok((est, set))
        }
        other => other,
    }
}

fn pilot(
    series: &SampleSeries,
    config: &PcfConfig,
    prep: &Prepared,
    h: f64,
    sigma2: f64,
    roughness: f64,
) -> Result<(Stage1Estimate, ChangePointSet)> {
    let ell = config.ell;
    let t = series.t();
    let (model, lambda, g, g_l, g_lp1) = match config.stage1_backend {
        Stage1Backend::Spline => {
            let lambda = lambda_from_halfwidth(h, config.m);
            let model = prep.basis.fit(series.y(), lambda)?;
            let g = model.eval_many(t, 0)?;
            let g_l = model.eval_many(t, ell)?;
            let g_lp1 = model.eval_many(t, ell + 1)?;
            (Some(model), Some(lambda), g, g_l, g_lp1)
        }
        Stage1Backend::Kernel => {
            let kernel = KernelSpec::new(config.kernel, ell)?;
            let g = kernel_smooth(series, &kernel, h, 0)?;
            let g_l = kernel_smooth(series, &kernel, h, ell)?;
            let g_lp1 = kernel_smooth(series, &kernel, h, ell + 1)?;
            (None, None, g, g_l, g_lp1)
        }
    };
    let (lo, hi) = series.domain();
    let margin = config.boundary_margin * (hi - lo);
    // rounding level of the ell-th derivative of a fit to data of this size
    let y_max = series.y().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = ROUNDOFF_RTOL * y_max / h.powi(ell as i32);
    let crossings: Vec<_> =
        detect_change_points(&snap_to_zero_with_floor(&g_l, ROUNDOFF_RTOL, floor), t)?
            .into_iter()
            .filter(|c| c.x > lo + margin && c.x < hi - margin)
            .collect();
    let flat_sigma2 = (config.max_interval_halfwidth * (hi - lo) / config.z_alpha).powi(2);
    let exponent = config.variance_exponent.unwrap_or((2 * ell + 3) as f64);
    let estimates: Vec<ChangePointEstimate> = crossings
        .iter()
        .map(|c| {
            let g_at = match &model {
                Some(m) => m.eval(c.x, ell + 1)?,
                None => interpolate(t, &g_lp1, c.x),
            };
            let var = match change_point_variance_with_exponent(
                g_at,
                sigma2,
                series.len(),
                h,
                roughness,
                exponent,
            ) {
                // the variance formula is local; never let one interval
                // outgrow the flat-curvature fallback
                Ok(v) => v.min(flat_sigma2),
                Err(Error::FlatCurvature { .. }) => flat_sigma2,
                Err(e) => return Err(e),
            };
            Ok(ChangePointEstimate {
                x: c.x,
                sign_after: c.sign_after,
                g_lp1: g_at,
                sigma2: var,
            })
        })
        .collect::<Result<_>>()?;
    let set = constraint_intervals(&estimates, ell, config.z_alpha, (lo, hi))?;
    Ok((
        Stage1Estimate {
            backend: config.stage1_backend,
            halfwidth: h,
            lambda,
            model,
            g,
            g_l,
            g_lp1,
            sigma2,
            roughness,
            retried: false,
        },
        set,
    ))
}

fn interpolate(t: &[f64], v: &[f64], x: f64) -> f64 {
    let i = t.partition_point(|&ti| ti <= x).clamp(1, t.len() - 1);
    let (t0, t1) = (t[i - 1], t[i]);
    let w = ((x - t0) / (t1 - t0)).clamp(0.0, 1.0);
    v[i - 1] * (1.0 - w) + v[i] * w
}

/// The stage-2 quadratic program for data `y` at smoothing level `lambda`:
/// one row `sign * B^(ell+1)(z)` per crossing point (`B^(ell)` for gap
/// points), scaled to unit max-norm.
pub fn assemble_qp(
    basis: &SplineBasis,
    y: &[f64],
    lambda: f64,
    spec: &ConstraintSpec,
    ell: usize,
) -> Result<BandedQP> {
    if ell + 1 > basis.degree() {
        return Err(Error::InvalidInput(format!(
            "derivative {} exceeds spline degree {}",
            ell + 1,
            basis.degree()
        )));
    }
    let system = basis.system(y, lambda);
    let rows = spec
        .points
        .iter()
        .map(|p| {
            let deriv = match p.kind {
                ConstraintKind::Crossing => ell + 1,
                ConstraintKind::Gap => ell,
            };
            let (first, vals) = basis_row(basis.knots(), basis.degree(), p.z, deriv);
            ConstraintRow::new(first, vals.into_iter().map(|v| p.sign as f64 * v).collect())
                .normalized()
        })
        .collect();
    BandedQP::new(system.matrix(), system.rhs, rows)
}

/// Every region with an enforced sign: the change-point intervals, then the
/// gaps.
fn sign_regions(set: &ChangePointSet, gaps: &[SignRegion]) -> Vec<SignRegion> {
    let mut out: Vec<SignRegion> = set
        .points
        .iter()
        .enumerate()
        .map(|(k, p)| SignRegion {
            lo: p.lo,
            hi: p.hi,
            sign: p.sign_after,
            index: k,
            kind: ConstraintKind::Crossing,
        })
        .collect();
    out.extend_from_slice(gaps);
    out
}

/// For each gap between consecutive constraint points of a region, the
/// check-grid point where the signed derivative is most negative, if it is
/// negative beyond rounding.
fn violations(
    model: &SplineModel,
    regions: &[SignRegion],
    ell: usize,
    spec: &ConstraintSpec,
    factor: usize,
) -> Result<Vec<ConstraintPoint>> {
    let mut out = Vec::new();
    for r in regions {
        if r.hi <= r.lo {
            continue;
        }
        let deriv = match r.kind {
            ConstraintKind::Crossing => ell + 1,
            ConstraintKind::Gap => ell,
        };
        let zs: Vec<f64> = spec.in_region(r.index, r.kind).map(|c| c.z).collect();
        let count = (factor * zs.len()).max(2);
        let grid: Vec<f64> = (0..count)
            .map(|j| r.lo + (r.hi - r.lo) * j as f64 / (count - 1) as f64)
            .collect();
        let vals: Vec<f64> = model
            .eval_many(&grid, deriv)?
            .into_iter()
            .map(|v| r.sign as f64 * v)
            .collect();
        let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-6 * scale.max(f64::MIN_POSITIVE);
        // worst violation per gap, keyed by the number of z's to its left
        let mut worst: Vec<Option<(f64, f64)>> = vec![None; zs.len() + 1];
        for (z, v) in grid.iter().zip(&vals) {
            if *v < -tol {
                let gap = zs.partition_point(|c| c < z);
                if worst[gap].is_none_or(|(_, w)| *v < w) {
                    worst[gap] = Some((*z, *v));
                }
            }
        }
        out.extend(worst.into_iter().flatten().map(|(z, _)| ConstraintPoint {
            z,
            sign: r.sign,
            interval: r.index,
            kind: r.kind,
        }));
    }
    Ok(out)
}

/// Sign `g^(ell)` keeps between the boundary margins when the pilot has no
/// change points: the sign of its mean there.
fn pilot_sign(series: &SampleSeries, g_l: &[f64], margin: f64) -> i8 {
    let (lo, hi) = series.domain();
    let sum: f64 = series
        .t()
        .iter()
        .zip(g_l)
        .filter(|(t, _)| **t >= lo + margin && **t <= hi - margin)
        .map(|(_, v)| v)
        .sum();
    if sum > 0.0 {
        1
    } else if sum < 0.0 {
        -1
    } else {
        0
    }
}

/// Candidate gap points: the knots when `g^(ell)` is piecewise linear (the
/// sign there then holds on every span), otherwise the data points.
fn gap_candidates(basis: &SplineBasis, series: &SampleSeries, ell: usize) -> Vec<f64> {
    if basis.degree() <= ell + 1 {
        let mut k = basis.knots().to_vec();
        k.dedup();
        k
    } else {
        series.t().to_vec()
    }
}

/// Full two-stage fit.
pub fn fit_pcf(series: &SampleSeries, config: &PcfConfig) -> Result<PcfResult> {
    let prep = prepare(series, config)?;
    let (stage1_est, set) = stage1_with(series, config, &prep)?;
    let lambda2 = prep.gcv.best_lambda();
    let y = series.y();

    let (lo, hi) = series.domain();
    let gaps = if config.constrain_gaps {
        let margin = config.boundary_margin * (hi - lo);
        gap_regions(
            &set,
            (lo, hi),
            margin,
            pilot_sign(series, &stage1_est.g_l, margin),
        )
    } else {
        Vec::new()
    };

    if set.is_empty() && gaps.is_empty() {
        let stage2 = prep.basis.fit(y, lambda2)?;
        return Ok(PcfResult {
            stage1: stage1_est,
            change_points: set,
            constraints: ConstraintSpec::default(),
            stage2,
            lambda2,
            diagnostics: Diagnostics {
                kkt: None,
                kkt_accepted: true,
                constraint_count: 0,
                active_count: 0,
                rounds: 0,
                solver: "unconstrained".into(),
                warnings: Vec::new(),
                gcv: prep.gcv,
            },
        });
    }

    let mut spec = place_constraint_points(&set, series.t(), config.density)?;
    spec.points.extend(place_gap_points(
        &gaps,
        &gap_candidates(&prep.basis, series, config.ell),
    ));
    let regions = sign_regions(&set, &gaps);
    let mut warnings = Vec::new();
    let mut round = 0;
    loop {
        let qp = assemble_qp(&prep.basis, y, lambda2, &spec, config.ell)?;
        let (sol, solver) = match solve_active_set(&qp, config.qp_tol) {
            Ok(s) => (s, "active_set"),
            Err(e) => {
                warn!("active-set solve failed ({e}); falling back to PSOR");
                let opts = PsorOptions {
                    tol: config.qp_tol,
                    ..PsorOptions::default()
                };
                (solve_psor(&qp, opts)?, "psor")
            }
        };
        let kkt_accepted = sol.residuals.accepted(KKT_ACCEPT_TOL, &qp.b);
        let stage2 = prep.basis.model(sol.x.clone());
        let bad = violations(&stage2, &regions, config.ell, &spec, config.check_factor)?;
        if bad.is_empty() || round >= config.max_rounds {
            if !bad.is_empty() {
                warnings.push(format!(
                    "constrained derivative changes sign between constraint points at {} check points after {} densification rounds",
                    bad.len(),
                    round
                ));
            }
            let constraint_count = spec.len();
            return Ok(PcfResult {
                stage1: stage1_est,
                change_points: set,
                constraints: spec,
                stage2,
                lambda2,
                diagnostics: Diagnostics {
                    kkt: Some(sol.residuals),
                    kkt_accepted,
                    constraint_count,
                    active_count: sol.active.len(),
                    rounds: round,
                    solver: solver.into(),
                    warnings,
                    gcv: prep.gcv,
                },
            });
        }
        spec.points.extend(bad);
        spec.sort();
        round += 1;
    }
}

/// Sign changes of `model^(ell)` on `grid` restricted to
/// `(lo + margin, hi - margin)`.
pub fn count_model_crossings(
    model: &SplineModel,
    grid: &[f64],
    ell: usize,
    margin: f64,
) -> Result<usize> {
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    let inner: Vec<f64> = grid
        .iter()
        .copied()
        .filter(|&t| t > lo + margin && t < hi - margin)
        .collect();
    Ok(count_sign_changes(&snap_to_zero(
        &model.eval_many(&inner, ell)?,
        ROUNDOFF_RTOL,
    )))
}
