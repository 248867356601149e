//! Seeded test signals.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::SampleSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    /// `sin(2 pi t)`: one interior inflection at 0.5.
    Sin,
    /// `t^3`.
    Cubic,
    /// `|t - 1/2|`: slope change at 0.5.
    Kink,
    /// `sign(t - 1/2) (t - 1/2)^2`: curvature flips at 0.5.
    PiecewiseQuadratic,
    /// AR(2) with poles at radius [`AR2_RADIUS`] and angle `2 pi` [`AR2_PEAK`].
    Ar2,
    /// `sin(2 pi (5 t + 20 t^2))`.
    Chirp,
}

pub const AR2_RADIUS: f64 = 0.95;
pub const AR2_PEAK: f64 = 0.2;
const AR2_BURN_IN: usize = 1000;

impl Signal {
    pub const ALL: [Signal; 6] = [
        Signal::Sin,
        Signal::Cubic,
        Signal::Kink,
        Signal::PiecewiseQuadratic,
        Signal::Ar2,
        Signal::Chirp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Signal::Sin => "sin",
            Signal::Cubic => "cubic",
            Signal::Kink => "kink",
            Signal::PiecewiseQuadratic => "pwquad",
            Signal::Ar2 => "ar2",
            Signal::Chirp => "chirp",
        }
    }

    /// Noise-free value at `t`; `None` for the stochastic AR(2) signal.
    pub fn truth(self, t: f64) -> Option<f64> {
        let c = t - 0.5;
        Some(match self {
            Signal::Sin => (2.0 * PI * t).sin(),
            Signal::Cubic => t.powi(3),
            Signal::Kink => c.abs(),
            Signal::PiecewiseQuadratic => c.signum() * c * c,
            Signal::Chirp => (2.0 * PI * (5.0 * t + 20.0 * t * t)).sin(),
            Signal::Ar2 => return None,
        })
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Signal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Signal::ALL
            .into_iter()
            .find(|sig| sig.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown signal '{s}'")))
    }
}

/// Generator for replicate `replicate` of a run seeded with `seed`. Each
/// replicate gets its own ChaCha stream, so replicates can be drawn in any
/// order or concurrently.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// AR(2) coefficients `(a1, a2)` of `x_t = a1 x_{t-1} + a2 x_{t-2} + e_t`.
pub fn ar2_coefficients() -> (f64, f64) {
    (
        2.0 * AR2_RADIUS * (2.0 * PI * AR2_PEAK).cos(),
        -AR2_RADIUS * AR2_RADIUS,
    )
}

/// Spectral density of the AR(2) process with unit innovations on
/// `[0, 1/2]`, in the convention where white noise has density 1.
pub fn ar2_spectrum(f: f64) -> f64 {
    let (a1, a2) = ar2_coefficients();
    let w = 2.0 * PI * f;
    let re = 1.0 - a1 * w.cos() - a2 * (2.0 * w).cos();
    let im = a1 * w.sin() + a2 * (2.0 * w).sin();
    1.0 / (re * re + im * im)
}

/// One noisy draw on `t_i = i / N`. For AR(2), `sigma` is the innovation
/// standard deviation.
pub fn simulate<R: Rng>(
    signal: Signal,
    n: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<(SampleSeries, Vec<f64>)> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("need N >= 2, got {n}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "sigma must be non-negative, got {sigma}"
        )));
    }
    let t: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    let (truth, y) = if signal == Signal::Ar2 {
        let (a1, a2) = ar2_coefficients();
        let (mut x1, mut x2) = (0.0, 0.0);
        let mut y = Vec::with_capacity(n);
        for i in 0..AR2_BURN_IN + n {
            let e: f64 = rng.sample(StandardNormal);
            let x = a1 * x1 + a2 * x2 + sigma * e;
            x2 = x1;
            x1 = x;
            if i >= AR2_BURN_IN {
                y.push(x);
            }
        }
        (vec![0.0; n], y)
    } else {
        let truth: Vec<f64> = t
            .iter()
            .map(|&ti| signal.truth(ti).expect("deterministic"))
            .collect();
        let y = truth
            .iter()
            .map(|g| g + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        (truth, y)
    };
    Ok((SampleSeries::new(t, y)?, truth))
}
