//! Two-stage piecewise convex fitting.
//!
//! A strongly smoothed pilot estimate locates the convexity change points of
//! the unknown curve; a smoothing spline is then refitted at the GCV level
//! with the sign of `g^(ell+1)` pinned inside a small interval around each
//! change point. The constrained fit is a banded quadratic program, solved
//! through its dual by an active-set method or projected SOR.
//!
//! Also included: loss-of-fit criteria and the piecewise convex information
//! criterion for adaptive regression splines, and a sine-taper
//! multi-window spectral estimator.

pub mod banded;
pub mod changepoint;
pub mod error;
pub mod kernels;
pub mod pcf;
pub mod pcic;
pub mod qp;
pub mod quadrature;
pub mod series;
pub mod simulate;
pub mod special;
pub mod spectral;
pub mod splines;

pub use error::{Error, Result};
pub use series::SampleSeries;
