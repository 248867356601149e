//! Sine-taper multi-window spectral estimation.
//!
//! With tapers `v_k(t) = sqrt(2/(N+1)) sin(pi k t / (N+1))` the tapered
//! transform at `f` is `(X(f - k D) - X(f + k D)) sqrt(D) / (2i)` with
//! `D = 1/(2N+2)`, so the taper average collapses to
//! `S(f) = (D/K) sum_k |X(f + k D) - X(f - k D)|^2`, evaluated here from a
//! single zero-padded FFT of length `2N+2`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pcf::{fit_pcf, iota, PcfConfig, PcfResult};
use crate::series::SampleSeries;
use crate::special::{digamma, trigamma};
use crate::splines::gcv_for_series;

/// Fewest thinned ordinates accepted for smoothing-level selection.
pub const MIN_DECORRELATED: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TaperSet {
    pub n: usize,
    pub k: usize,
    /// `k` rows of length `n`.
    pub tapers: Vec<Vec<f64>>,
}

impl TaperSet {
    /// `max |<v_j, v_k> - [j == k]|`.
    pub fn gram_deviation(&self) -> f64 {
        let mut worst = 0.0f64;
        for (j, a) in self.tapers.iter().enumerate() {
            for (k, b) in self.tapers.iter().enumerate().skip(j) {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let target = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

pub fn sine_tapers(n: usize, k: usize) -> Result<TaperSet> {
    if k == 0 || k >= n {
        return Err(Error::TooManyTapers { requested: k, n });
    }
    let scale = (2.0 / (n + 1) as f64).sqrt();
    let tapers = (1..=k)
        .map(|j| {
            (1..=n)
                .map(|t| scale * (PI * (j * t) as f64 / (n + 1) as f64).sin())
                .collect()
        })
        .collect();
    Ok(TaperSet { n, k, tapers })
}

/// `floor((N/2)^(8/15))`, at least 1.
pub fn default_num_tapers(n: usize) -> usize {
    ((n as f64 / 2.0).powf(8.0 / 15.0).floor() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    /// `j D` for `j = 0..=N+1`, spanning `[0, 1/2]` cycles per sample.
    pub freqs: Vec<f64>,
    pub s: Vec<f64>,
    pub k: usize,
    pub delta: f64,
    pub n: usize,
}

impl SpectrumEstimate {
    /// Frequency of the largest estimate (first on ties).
    pub fn peak_frequency(&self) -> f64 {
        let mut best = 0;
        for (j, v) in self.s.iter().enumerate() {
            if *v > self.s[best] {
                best = j;
            }
        }
        self.freqs[best]
    }
}

/// Multi-window estimate with `k` sine tapers; white noise of variance
/// `sigma^2` has mean estimate `sigma^2` at every frequency.
pub fn multiwindow_spectrum(x: &[f64], k: usize) -> Result<SpectrumEstimate> {
    let n = x.len();
    if k == 0 {
        return Err(Error::InvalidInput("at least one taper is required".into()));
    }
    if 2 * k >= n {
        return Err(Error::OffsetOutOfBand { tapers: k, n });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "series contains non-finite values".into(),
        ));
    }
    let len = 2 * n + 2;
    let delta = 1.0 / len as f64;
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    for (t, v) in x.iter().enumerate() {
        buf[t + 1] = Complex::new(*v, 0.0);
    }
    FftPlanner::<f64>::new()
        .plan_fft_forward(len)
        .process(&mut buf);
    let s = (0..=n + 1)
        .map(|j| {
            let sum: f64 = (1..=k)
                .map(|o| (buf[(j + o) % len] - buf[(j + len - o) % len]).norm_sqr())
                .sum();
            delta * sum / k as f64
        })
        .collect();
    Ok(SpectrumEstimate {
        freqs: (0..=n + 1).map(|j| j as f64 * delta).collect(),
        s,
        k,
        delta,
        n,
    })
}

/// Explicit average of `k` sine-tapered periodograms at `freqs`; the
/// reference the difference form is checked against.
pub fn tapered_periodogram_average(x: &[f64], k: usize, freqs: &[f64]) -> Result<Vec<f64>> {
    let tapers = sine_tapers(x.len(), k)?;
    Ok(freqs
        .iter()
        .map(|&f| {
            tapers
                .tapers
                .iter()
                .map(|v| {
                    let z: Complex<f64> = v
                        .iter()
                        .zip(x)
                        .enumerate()
                        .map(|(i, (w, xi))| {
                            Complex::from_polar(w * xi, -2.0 * PI * f * (i + 1) as f64)
                        })
                        .sum();
                    z.norm_sqr()
                })
                .sum::<f64>()
                / k as f64
        })
        .collect())
}

/// `ln K - psi(K)`: added to `ln S` to remove the mean of the log of a
/// `chi^2_{2K} / 2K` variable.
pub fn log_bias_offset(k: usize) -> f64 {
    (k as f64).ln() - digamma(k as f64)
}

/// `psi'(K)`: variance of `ln S` for a smooth spectrum.
pub fn log_variance(k: usize) -> f64 {
    trigamma(k as f64)
}

/// Bias-corrected log spectrum at the interior frequencies `j D`,
/// `j = 1..=N`, on the canonical grid `t_j = j / N`.
pub fn log_spectrum_series(estimate: &SpectrumEstimate) -> Result<(SampleSeries, Vec<f64>)> {
    let n = estimate.n;
    let interior = &estimate.s[1..=n];
    if let Some(v) = interior.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "log spectrum needs a positive estimate, found {v}"
        )));
    }
    let offset = log_bias_offset(estimate.k);
    let y = interior.iter().map(|v| v.ln() + offset).collect();
    Ok((
        SampleSeries::from_values(y)?,
        estimate.freqs[1..=n].to_vec(),
    ))
}

/// Lag beyond which log-spectrum ordinates are effectively uncorrelated: the
/// estimate at bin `j` uses transform values `j - K..=j + K`.
pub fn decorrelation_stride(k: usize) -> usize {
    2 * k
}

/// Two-stage piecewise convex fit of the bias-corrected log spectrum, on
/// the canonical grid of [`frequency_to_unit`].
///
/// Neighbouring ordinates are correlated over about `2K` bins, which makes
/// GCV on the full grid interpolate. Unless fixed in `config`, the smoothing
/// level is therefore chosen by GCV on every `2K`-th ordinate, the noise
/// variance is the long-run variance `2K psi'(K)` and the pilot inflation
/// uses the effective sample size `N / 2K`.
pub fn pcf_log_spectrum(estimate: &SpectrumEstimate, config: &PcfConfig) -> Result<PcfResult> {
    let (series, _) = log_spectrum_series(estimate)?;
    let k = estimate.k;
    let stride = decorrelation_stride(k);
    let mut config = config.clone();
    if config.lambda.is_none() {
        let thinned: Vec<f64> = series.y().iter().copied().skip(k).step_by(stride).collect();
        if thinned.len() < MIN_DECORRELATED {
            return Err(Error::InvalidInput(format!(
                "only {} decorrelated frequencies for {k} tapers and N = {}; use fewer tapers",
                thinned.len(),
                estimate.n
            )));
        }
        let thin = SampleSeries::from_values(thinned)?;
        let (_, curve) = gcv_for_series(&thin, config.m)?;
        config.lambda = Some(curve.best_lambda());
    }
    if config.sigma2.is_none() {
        config.sigma2 = Some(stride as f64 * log_variance(k));
    }
    let n = series.len();
    let n_eff = (n / stride).max(2);
    config.iota_multiplier *= iota(n_eff, config.m, config.ell) / iota(n, config.m, config.ell);
    fit_pcf(&series, &config)
}

/// Canonical fitting coordinate of frequency `f` for a length-`n` series.
pub fn frequency_to_unit(f: f64, n: usize) -> f64 {
    f * (2 * n + 2) as f64 / n as f64
}
