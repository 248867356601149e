use thiserror::Error;

/// Errors raised by the estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("bandwidth {h} is not larger than the grid spacing {delta}")]
    BandwidthTooSmall { h: f64, delta: f64 },

    #[error("derivative order {requested} exceeds the kernel's supported maximum {max}")]
    UnsupportedDerivative { requested: usize, max: usize },

    #[error("penalized system is singular: rank gap {rank_gap} of {size} coefficients")]
    SingularSystem { rank_gap: usize, size: usize },

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("all GCV scores are non-finite")]
    DegenerateData,

    #[error("point {t} lies outside the spline domain [{lo}, {hi}]")]
    OutsideDomain { t: f64, lo: f64, hi: f64 },

    #[error("stage-1 curvature |g^(l+1)| = {value:e} is below {threshold:e}")]
    FlatCurvature { value: f64, threshold: f64 },

    #[error("adjacent change points at {left} and {right} imply the same sign")]
    InconsistentGeometry { left: f64, right: f64 },

    #[error("solver did not converge after {iterations} iterations ({residuals})")]
    NonConvergence {
        iterations: usize,
        x: Vec<f64>,
        mu: Vec<f64>,
        residuals: crate::qp::KktResiduals,
    },

    #[error("saturated model: (gamma1*p + m)/N = {ratio} >= 1")]
    SaturatedModel { ratio: f64 },

    #[error("{requested} tapers requested for a series of length {n}")]
    TooManyTapers { requested: usize, n: usize },

    #[error("{tapers} tapers push frequency offsets out of band for length {n}")]
    OffsetOutOfBand { tapers: usize, n: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
