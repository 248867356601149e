//! Kernel smoothing and kernel derivative estimation on a uniform grid.
//!
//! Every estimate is a linear combination `sum_i w_i(t) y_i`. Near the data
//! boundary the raw kernel weights are corrected so that the weights for a
//! `d`-th derivative reproduce the `d`-th derivative of every polynomial of
//! degree `<= d`. For `d = 0` this is plain renormalization to unit sum.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;
use crate::series::SampleSeries;

/// Gaussian kernels are truncated at this many standard deviations.
pub const GAUSSIAN_TRUNCATION: f64 = 6.0;

/// Highest derivative evaluated for the Gaussian family.
const GAUSSIAN_MAX_DERIVATIVE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Gaussian,
    Epanechnikov,
    /// Even polynomial times the Epanechnikov kernel, with vanishing moments
    /// `1..order-1`.
    HigherOrder {
        order: usize,
    },
}

/// A kernel together with its moment order and the roughness constant
/// `c = int (kappa^(ell)(u))^2 du`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    order: usize,
    ell: usize,
    /// Ascending power coefficients on `[-1, 1]`; empty for the Gaussian.
    poly: Vec<f64>,
    roughness: f64,
}

impl KernelSpec {
    /// Builds the kernel and computes its roughness constant for the
    /// derivative order `ell` by adaptive quadrature.
    pub fn new(family: KernelFamily, ell: usize) -> Result<Self> {
        let (order, poly) = match family {
            KernelFamily::Gaussian => (2, Vec::new()),
            KernelFamily::Epanechnikov => (2, vec![0.75, 0.0, -0.75]),
            KernelFamily::HigherOrder { order } => {
                if order < 2 {
                    return Err(Error::InvalidInput(format!(
                        "kernel order must be at least 2, got {order}"
                    )));
                }
                (order, higher_order_polynomial(order)?)
            }
        };
        let mut spec = Self {
            family,
            order,
            ell,
            poly,
            roughness: 0.0,
        };
        if ell > spec.max_derivative() {
            return Err(Error::UnsupportedDerivative {
                requested: ell,
                max: spec.max_derivative(),
            });
        }
        let support = spec.support();
        let f = |u: f64| spec.eval(u, ell).powi(2);
        let c = adaptive_simpson(&f, -support, support, 1e-13);
        if !(c > 0.0) {
            return Err(Error::InvalidInput(format!(
                "derivative {ell} of the kernel vanishes identically"
            )));
        }
        spec.roughness = c;
        Ok(spec)
    }

    pub fn gaussian(ell: usize) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, ell)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// Moment order: moments `1..order-1` vanish.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    /// `int (kappa^(ell))^2 du`.
    pub fn roughness(&self) -> f64 {
        self.roughness
    }

    /// Half-length of the (truncated) support in units of the halfwidth.
    pub fn support(&self) -> f64 {
        match self.family {
            KernelFamily::Gaussian => GAUSSIAN_TRUNCATION,
            _ => 1.0,
        }
    }

    /// Highest derivative the kernel supports. Polynomial kernels stop at
    /// their polynomial degree.
    pub fn max_derivative(&self) -> usize {
        match self.family {
            KernelFamily::Gaussian => GAUSSIAN_MAX_DERIVATIVE,
            _ => self.poly.len() - 1,
        }
    }

    /// `kappa^(deriv)(u)`; zero outside the support.
    pub fn eval(&self, u: f64, deriv: usize) -> f64 {
        if u.abs() > self.support() {
            return 0.0;
        }
        match self.family {
            KernelFamily::Gaussian => {
                // phi^(d)(u) = (-1)^d He_d(u) phi(u)
                let phi = (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
                let he = hermite_e(deriv, u);
                if deriv.is_multiple_of(2) {
                    he * phi
                } else {
                    -he * phi
                }
            }
            _ => self
                .poly
                .iter()
                .enumerate()
                .skip(deriv)
                .rev()
                .fold(0.0, |acc, (p, &c)| acc * u + c * falling(p, deriv)),
        }
    }

    /// Non-negative weight shape used for the boundary correction.
    fn correction_shape(&self, u: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => self.eval(u, 0),
            _ => (1.0 - u * u).max(0.0),
        }
    }
}

/// `p (p-1) ... (p-d+1)`.
fn falling(p: usize, d: usize) -> f64 {
    (0..d).map(|k| (p - k) as f64).product()
}

/// Probabilists' Hermite polynomial `He_n(u)`.
fn hermite_e(n: usize, u: f64) -> f64 {
    let mut h0 = 1.0;
    if n == 0 {
        return h0;
    }
    let mut h1 = u;
    for k in 1..n {
        let h2 = u * h1 - k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// Coefficients of `p(u) * 3/4 (1 - u^2)` with `p` even and the even moments
/// `2, 4, ..., <= order-1` vanishing.
fn higher_order_polynomial(order: usize) -> Result<Vec<f64>> {
    let q = (order - 1) / 2 + 1;
    // int u^{2k} 3/4 (1-u^2) du over [-1,1] = 3 / ((2k+1)(2k+3))
    let epa_moment = |k: usize| 3.0 / (((2 * k + 1) * (2 * k + 3)) as f64);
    let a = DMatrix::from_fn(q, q, |r, c| epa_moment(r + c));
    let mut rhs = DVector::zeros(q);
    rhs[0] = 1.0;
    let p = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidInput(format!("moment system singular for order {order}")))?;
    let mut poly = vec![0.0; 2 * q + 1];
    for (k, &ck) in p.iter().enumerate() {
        poly[2 * k] += 0.75 * ck;
        poly[2 * k + 2] -= 0.75 * ck;
    }
    Ok(poly)
}

/// `N^(-1/(2m+1))`, the halfwidth scaling that minimizes the mean square
/// error for `g` in `C^m` (proportionality constant 1).
pub fn mse_halfwidth(n: usize, m: usize) -> Result<f64> {
    if n < 2 || m < 1 {
        return Err(Error::InvalidInput(format!(
            "mse_halfwidth needs N >= 2 and m >= 1, got N = {n}, m = {m}"
        )));
    }
    Ok((n as f64).powf(-1.0 / (2 * m + 1) as f64))
}

/// Kernel estimate of `g^(deriv)` at every grid point:
/// `(1 / (N h^(1+deriv))) sum_i y_i kappa^(deriv)((t - t_i) / h)`, boundary
/// corrected.
pub fn kernel_smooth(
    series: &SampleSeries,
    kernel: &KernelSpec,
    h: f64,
    deriv: usize,
) -> Result<Vec<f64>> {
    let weights = kernel_weights(series, kernel, h, deriv)?;
    let y = series.y();
    Ok(weights
        .into_iter()
        .map(|(start, w)| w.iter().zip(&y[start..]).map(|(w, y)| w * y).sum())
        .collect())
}

/// Row `j` of the smoother matrix as `(first index, weights)`.
pub fn kernel_weights(
    series: &SampleSeries,
    kernel: &KernelSpec,
    h: f64,
    deriv: usize,
) -> Result<Vec<(usize, Vec<f64>)>> {
    let delta = series.delta();
    if !(h > delta) {
        return Err(Error::BandwidthTooSmall { h, delta });
    }
    if deriv > kernel.max_derivative() {
        return Err(Error::UnsupportedDerivative {
            requested: deriv,
            max: kernel.max_derivative(),
        });
    }
    let t = series.t();
    let n = t.len();
    let reach = kernel.support() * h;
    let scale = 1.0 / (n as f64 * h.powi(1 + deriv as i32));
    let target = falling(deriv, deriv) / h.powi(deriv as i32);
    let mut rows = Vec::with_capacity(n);
    for &tj in t {
        let lo = t.partition_point(|&ti| ti < tj - reach);
        let hi = t.partition_point(|&ti| ti <= tj + reach);
        let mut w: Vec<f64> = t[lo..hi]
            .iter()
            .map(|&ti| scale * kernel.eval((tj - ti) / h, deriv))
            .collect();
        // Moment correction: add shape(v) * sum_k a_k v^k so that
        // sum_i w_i v_i^k = target * [k == deriv] for k = 0..=deriv.
        let dim = deriv + 1;
        let v: Vec<f64> = t[lo..hi].iter().map(|&ti| (ti - tj) / h).collect();
        let shape: Vec<f64> = v.iter().map(|&vi| kernel.correction_shape(-vi)).collect();
        let mut gram = DMatrix::<f64>::zeros(dim, dim);
        let mut rhs = DVector::<f64>::zeros(dim);
        for i in 0..v.len() {
            let mut pk = 1.0;
            let mut powers = [0.0; 2 * GAUSSIAN_MAX_DERIVATIVE + 2];
            for p in powers.iter_mut().take(2 * dim - 1) {
                *p = pk;
                pk *= v[i];
            }
            for r in 0..dim {
                rhs[r] -= w[i] * powers[r];
                for c in 0..dim {
                    gram[(r, c)] += shape[i] * powers[r + c];
                }
            }
        }
        rhs[deriv] += target;
        if let Some(a) = gram.lu().solve(&rhs) {
            if a.iter().all(|x: &f64| x.is_finite()) {
                for i in 0..v.len() {
                    let mut pk = 1.0;
                    let mut corr = 0.0;
                    for ak in a.iter() {
                        corr += ak * pk;
                        pk *= v[i];
                    }
                    w[i] += shape[i] * corr;
                }
            }
        }
        rows.push((lo, w));
    }
    Ok(rows)
}
