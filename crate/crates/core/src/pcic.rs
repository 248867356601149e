//! Loss-of-fit criteria for regression splines and forward knot selection.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::changepoint::{count_sign_changes, noise_variance_estimate, snap_to_zero};
use crate::error::{Error, Result};
use crate::series::SampleSeries;
use crate::splines::{KnotStrategy, SplineBasis, SplineModel};

pub const DEFAULT_GAMMA1: f64 = 3.0;
pub const DEFAULT_GAMMA2: f64 = 2.0;

/// A knot must lower the (noise-normalized) criterion by more than this.
pub const MIN_IMPROVEMENT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LofInputs {
    /// Residual sum of squares over `N sigma^2`.
    pub sigma2_fit: f64,
    /// Interior knot count.
    pub p: usize,
    /// Spline degree.
    pub m: usize,
    /// Convexity change-point count.
    pub k: usize,
    pub n: usize,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl LofInputs {
    pub fn new(sigma2_fit: f64, p: usize, m: usize, k: usize, n: usize) -> Self {
        Self {
            sigma2_fit,
            p,
            m,
            k,
            n,
            gamma1: DEFAULT_GAMMA1,
            gamma2: DEFAULT_GAMMA2,
        }
    }

    fn friedman_denominator(&self) -> Result<f64> {
        let ratio = (self.gamma1 * self.p as f64 + self.m as f64) / self.n as f64;
        if ratio >= 1.0 || self.n == 0 {
            return Err(Error::SaturatedModel { ratio });
        }
        Ok(1.0 - ratio)
    }
}

/// `sigma2 / (1 - (gamma1 p + m) / N)`.
pub fn lof_friedman(inputs: &LofInputs) -> Result<f64> {
    Ok(inputs.sigma2_fit / inputs.friedman_denominator()?)
}

/// `sigma2 (1 + (gamma2 p + m) ln N / N)`.
pub fn lof_bayes(inputs: &LofInputs) -> Result<f64> {
    if inputs.n < 2 {
        return Err(Error::InvalidInput(format!(
            "need N >= 2, got {}",
            inputs.n
        )));
    }
    let n = inputs.n as f64;
    Ok(
        inputs.sigma2_fit
            * (1.0 + (inputs.gamma2 * inputs.p as f64 + inputs.m as f64) * n.ln() / n),
    )
}

/// `sigma2 (1 + gamma2 K ln N / N) / (1 - (gamma1 p + m) / N)`.
pub fn pcic(inputs: &LofInputs) -> Result<f64> {
    let n = inputs.n as f64;
    let den = inputs.friedman_denominator()?;
    Ok(inputs.sigma2_fit * (1.0 + inputs.gamma2 * inputs.k as f64 * n.ln() / n) / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Friedman,
    Bayes,
    #[default]
    Pcic,
}

impl Criterion {
    pub fn evaluate(self, inputs: &LofInputs) -> Result<f64> {
        match self {
            Criterion::Friedman => lof_friedman(inputs),
            Criterion::Bayes => lof_bayes(inputs),
            Criterion::Pcic => pcic(inputs),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Friedman => "friedman",
            Criterion::Bayes => "bayes",
            Criterion::Pcic => "pcic",
        })
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "friedman" => Ok(Criterion::Friedman),
            "bayes" => Ok(Criterion::Bayes),
            "pcic" => Ok(Criterion::Pcic),
            _ => Err(Error::InvalidInput(format!(
                "unknown criterion '{s}' (expected friedman, bayes or pcic)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub max_knots: usize,
    pub criterion: Criterion,
    /// Regression spline degree.
    pub degree: usize,
    /// Change points are sign changes of the `ell`-th derivative.
    pub ell: usize,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Noise variance for the residual normalization; estimated when absent.
    pub sigma2: Option<f64>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            max_knots: 10,
            criterion: Criterion::Pcic,
            degree: 3,
            ell: 2,
            gamma1: DEFAULT_GAMMA1,
            gamma2: DEFAULT_GAMMA2,
            sigma2: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub step: usize,
    /// Knot added at this step (`None` for the knot-free start).
    pub knot: Option<f64>,
    pub knot_index: Option<usize>,
    pub criterion: f64,
    pub k: usize,
    pub p: usize,
    pub rss: f64,
    /// Candidates skipped because their design was rank deficient.
    pub skipped: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub model: SplineModel,
    pub knots: Vec<f64>,
    pub sigma2: f64,
    pub trace: Vec<SelectionStep>,
}

/// Unpenalized least-squares regression spline fit with the given interior
/// knots: `(model, rss)`, or `None` when the design is rank deficient.
pub fn regression_spline(
    series: &SampleSeries,
    degree: usize,
    knots: &[f64],
) -> Result<Option<(SplineModel, f64)>> {
    if degree == 0 {
        return Err(Error::InvalidInput("degree must be at least 1".into()));
    }
    let basis = SplineBasis::new(
        series.t(),
        1,
        degree,
        &KnotStrategy::Explicit(knots.to_vec()),
    )?;
    let gram = basis.gram();
    if gram.rank_gap(1e-12) > 0 {
        return Ok(None);
    }
    let Ok(chol) = gram.cholesky() else {
        return Ok(None);
    };
    let coeffs = chol.solve(&basis.rhs(series.y()));
    let rss = basis
        .fitted(&coeffs)
        .iter()
        .zip(series.y())
        .map(|(f, y)| (y - f).powi(2))
        .sum();
    Ok(Some((basis.model(coeffs), rss)))
}

/// Sign changes of `model^(ell)` at the midpoints of the sample grid.
pub fn count_midpoint_changes(model: &SplineModel, t: &[f64], ell: usize) -> Result<usize> {
    if ell > model.degree {
        return Ok(0);
    }
    let mids: Vec<f64> = t.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    Ok(count_sign_changes(&snap_to_zero(
        &model.eval_many(&mids, ell)?,
        1e-9,
    )))
}

struct Candidate {
    index: usize,
    score: f64,
    k: usize,
    rss: f64,
    model: SplineModel,
}

/// Greedy forward knot addition over interior data points. Each step adds
/// the candidate with the smallest criterion (leftmost on ties) and stops
/// when no candidate improves on the current model.
pub fn forward_knot_selection(
    series: &SampleSeries,
    config: &SelectionConfig,
) -> Result<Selection> {
    if !(config.gamma1 > 0.0 && config.gamma2 > 0.0) {
        return Err(Error::InvalidInput("penalties must be positive".into()));
    }
    let sigma2 = match config.sigma2 {
        Some(s) if s > 0.0 => s,
        Some(s) => {
            return Err(Error::InvalidInput(format!(
                "sigma2 must be positive, got {s}"
            )))
        }
        None => {
            let s = noise_variance_estimate(series)?;
            if s > 0.0 {
                s
            } else {
                1.0
            }
        }
    };
    let t = series.t();
    let n = series.len();
    let score = |rss: f64, p: usize, k: usize| {
        let inputs = LofInputs {
            sigma2_fit: rss / (n as f64 * sigma2),
            p,
            m: config.degree,
            k,
            n,
            gamma1: config.gamma1,
            gamma2: config.gamma2,
        };
        config.criterion.evaluate(&inputs)
    };

    let (mut model, rss0) =
        regression_spline(series, config.degree, &[])?.ok_or(Error::DegenerateData)?;
    let k0 = count_midpoint_changes(&model, t, config.ell)?;
    let mut current = score(rss0, 0, k0)?;
    let mut trace = vec![SelectionStep {
        step: 0,
        knot: None,
        knot_index: None,
        criterion: current,
        k: k0,
        p: 0,
        rss: rss0,
        skipped: Vec::new(),
    }];
    let mut chosen: Vec<usize> = Vec::new();

    while chosen.len() < config.max_knots {
        let p = chosen.len() + 1;
        let pool: Vec<usize> = (1..n - 1).filter(|i| !chosen.contains(i)).collect();
        let results: Vec<Result<Option<Candidate>>> = pool
            .par_iter()
            .map(|&i| {
                let mut idx = chosen.clone();
                idx.push(i);
                idx.sort_unstable();
                let knots: Vec<f64> = idx.iter().map(|&j| t[j]).collect();
                let Some((model, rss)) = regression_spline(series, config.degree, &knots)? else {
                    return Ok(None);
                };
                let k = count_midpoint_changes(&model, t, config.ell)?;
                Ok(Some(Candidate {
                    index: i,
                    score: score(rss, p, k)?,
                    k,
                    rss,
                    model,
                }))
            })
            .collect();
        let mut skipped = Vec::new();
        let mut best: Option<Candidate> = None;
        for (&i, r) in pool.iter().zip(results) {
            match r {
                Ok(Some(c)) => {
                    if best.as_ref().is_none_or(|b| c.score < b.score) {
                        best = Some(c);
                    }
                }
                Ok(None) => skipped.push(i),
                Err(Error::SaturatedModel { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        let Some(best) = best.filter(|b| b.score < current - MIN_IMPROVEMENT) else {
            break;
        };
        current = best.score;
        chosen.push(best.index);
        model = best.model;
        trace.push(SelectionStep {
            step: chosen.len(),
            knot: Some(t[best.index]),
            knot_index: Some(best.index),
            criterion: best.score,
            k: best.k,
            p,
            rss: best.rss,
            skipped,
        });
    }
    let mut knots: Vec<f64> = chosen.iter().map(|&i| t[i]).collect();
    knots.sort_by(f64::total_cmp);
    Ok(Selection {
        model,
        knots,
        sigma2,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_values() {
        let a = LofInputs {
            gamma1: 3.0,
            ..LofInputs::new(1.0, 0, 2, 0, 100)
        };
        assert!((lof_friedman(&a).unwrap() - 1.0 / 0.98).abs() < 1e-12);
        assert_eq!(
            lof_friedman(&LofInputs {
                sigma2_fit: 0.0,
                ..a
            })
            .unwrap(),
            0.0
        );
        let b = LofInputs {
            gamma2: 1.0,
            ..LofInputs::new(1.0, 1, 2, 0, 100)
        };
        assert!((lof_bayes(&b).unwrap() - (1.0 + 3.0 * 100f64.ln() / 100.0)).abs() < 1e-12);
        assert!((lof_bayes(&b).unwrap() - 1.138155).abs() < 1e-6);
        assert_eq!(lof_bayes(&LofInputs::new(1.0, 0, 0, 0, 37)).unwrap(), 1.0);
        let c = LofInputs::new(0.5, 4, 3, 2, 1000);
        let expect = 0.5 * (1.0 + 4.0 * 1000f64.ln() / 1000.0) / (1.0 - 15.0 / 1000.0);
        assert!((pcic(&c).unwrap() - expect).abs() < 1e-12);
        assert!((pcic(&c).unwrap() - 0.5216401122415881).abs() < 1e-12);
    }

    #[test]
    fn saturation_is_an_error() {
        let s = LofInputs::new(1.0, 33, 2, 0, 100);
        assert!(matches!(
            lof_friedman(&s),
            Err(Error::SaturatedModel { .. })
        ));
        assert!(matches!(pcic(&s), Err(Error::SaturatedModel { .. })));
        assert!(lof_bayes(&s).is_ok());
    }

    #[test]
    fn criterion_names() {
        for c in [Criterion::Friedman, Criterion::Bayes, Criterion::Pcic] {
            assert_eq!(c.to_string().parse::<Criterion>().unwrap(), c);
        }
        assert!("aic".parse::<Criterion>().is_err());
    }

    #[test]
    fn polynomial_data_selects_no_knots() {
        let y: Vec<f64> = (1..=60)
            .map(|i| (i as f64 / 60.0).powi(3) - 0.3 * i as f64 / 60.0)
            .collect();
        let series = SampleSeries::from_values(y).unwrap();
        let sel = forward_knot_selection(&series, &SelectionConfig::default()).unwrap();
        assert!(sel.knots.is_empty());
        assert_eq!(sel.trace.len(), 1);
    }
}
