//! Fixtures shared by the benchmarks.

use pcfit_core::pcf::{assemble_qp, fit_pcf, PcfConfig};
use pcfit_core::qp::BandedQP;
use pcfit_core::simulate::{replicate_rng, simulate, Signal};
use pcfit_core::splines::SplineBasis;
use pcfit_core::SampleSeries;

/// Noisy `sin(2 pi t)` at `n` points, sigma 0.2.
pub fn sin_series(n: usize) -> SampleSeries {
    simulate(Signal::Sin, n, 0.2, &mut replicate_rng(1, 0))
        .unwrap()
        .0
}

/// AR(2) sample of length `n` with unit innovations.
pub fn ar2_series(n: usize) -> Vec<f64> {
    simulate(Signal::Ar2, n, 1.0, &mut replicate_rng(2, 0))
        .unwrap()
        .0
        .y()
        .to_vec()
}

/// The stage-2 QP that `fit_pcf` solves for [`sin_series`].
pub fn stage2_qp(n: usize, constrain_gaps: bool) -> BandedQP {
    let series = sin_series(n);
    let config = PcfConfig {
        constrain_gaps,
        ..PcfConfig::default()
    };
    let res = fit_pcf(&series, &config).unwrap();
    let basis = SplineBasis::for_series(&series, config.m).unwrap();
    assemble_qp(
        &basis,
        series.y(),
        res.lambda2,
        &res.constraints,
        config.ell,
    )
    .unwrap()
}
