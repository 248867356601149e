//! Replicated log-spectrum fits at N = 4096. Each test takes a couple of
//! minutes on one core.

mod common;

use common::normals;
use pcfit_core::changepoint::count_sign_changes;
use pcfit_core::kernels::{kernel_smooth, KernelSpec};
use pcfit_core::pcf::{count_model_crossings, PcfConfig};
use pcfit_core::simulate::{replicate_rng, simulate, Signal};
use pcfit_core::spectral::{
    default_num_tapers, log_spectrum_series, multiwindow_spectrum, pcf_log_spectrum,
};
use pcfit_core::splines::{gcv_for_series, halfwidth_from_lambda};
use rayon::prelude::*;

const N: usize = 4096;
const REPS: u64 = 50;
const MARGIN: f64 = 0.05;

fn rate(hits: usize) -> f64 {
    hits as f64 / REPS as f64
}

#[test]
fn white_noise_log_spectrum_is_flat() {
    let k = default_num_tapers(N);
    let hits = (0..REPS)
        .into_par_iter()
        .filter(|&r| {
            let est = multiwindow_spectrum(&normals(13, r, N), k).unwrap();
            let res = pcf_log_spectrum(&est, &PcfConfig::default()).unwrap();
            let (series, _) = log_spectrum_series(&est).unwrap();
            let (lo, hi) = series.domain();
            let pad = MARGIN * (hi - lo);
            let inner: Vec<f64> = series
                .t()
                .iter()
                .copied()
                .filter(|t| *t > lo + pad && *t < hi - pad)
                .collect();
            let sup = res
                .stage2
                .eval_many(&inner, 0)
                .unwrap()
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            sup < 0.1
        })
        .count();
    eprintln!("interior sup-norm below 0.1 in {hits}/{REPS} replicates");
    assert!(rate(hits) >= 0.8, "{hits}/{REPS}");
}

/// Inflection pairs: sign changes of the second derivative, rounded up to
/// whole pairs.
fn pairs(changes: usize) -> usize {
    changes.div_ceil(2)
}

/// Replicates in which the fitted log spectrum has at most two inflection
/// pairs and strictly fewer than the comparator: a Gaussian kernel smoother
/// of the single-taper log-periodogram at the halfwidth of that
/// periodogram's GCV spline fit.
fn ar2_comparison(constrain_gaps: bool) -> usize {
    let k = default_num_tapers(N);
    let config = PcfConfig {
        constrain_gaps,
        ..PcfConfig::default()
    };
    let kernel = KernelSpec::gaussian(2).unwrap();
    (0..REPS)
        .into_par_iter()
        .filter(|&r| {
            let (x, _) = simulate(Signal::Ar2, N, 1.0, &mut replicate_rng(21, r)).unwrap();
            let est = multiwindow_spectrum(x.y(), k).unwrap();
            let res = pcf_log_spectrum(&est, &config).unwrap();
            assert!(res.diagnostics.kkt_accepted, "replicate {r}");
            let (series, _) = log_spectrum_series(&est).unwrap();
            let fitted = count_model_crossings(&res.stage2, series.t(), 2, MARGIN).unwrap();

            let raw = multiwindow_spectrum(x.y(), 1).unwrap();
            let (raw_series, _) = log_spectrum_series(&raw).unwrap();
            let (_, curve) = gcv_for_series(&raw_series, 2).unwrap();
            let h = halfwidth_from_lambda(curve.best_lambda(), 2);
            let smooth = kernel_smooth(&raw_series, &kernel, h, 2).unwrap();
            let (lo, hi) = raw_series.domain();
            let pad = MARGIN * (hi - lo);
            let inner: Vec<f64> = raw_series
                .t()
                .iter()
                .zip(&smooth)
                .filter(|(t, _)| **t > lo + pad && **t < hi - pad)
                .map(|(_, v)| *v)
                .collect();
            let kernel_changes = count_sign_changes(&inner);
            pairs(fitted) <= 2 && pairs(kernel_changes) > pairs(fitted)
        })
        .count()
}

/// Gap mode: the log-spectrum fit also keeps its curvature sign between
/// the change-point intervals.
#[test]
fn ar2_fit_has_fewer_inflections_than_a_kernel_smoother_in_gap_mode() {
    let hits = ar2_comparison(true);
    eprintln!("gap-mode comparison held in {hits}/{REPS} replicates");
    assert!(rate(hits) >= 0.7, "{hits}/{REPS}");
}

/// Constraints inside the intervals only. Between intervals the fit at the
/// GCV level wiggles freely, so the comparison holds far less often; run
/// with `--ignored` to see the measured rate.
#[test]
#[ignore]
fn ar2_fit_has_fewer_inflections_than_a_kernel_smoother() {
    let hits = ar2_comparison(false);
    eprintln!("interval-only comparison held in {hits}/{REPS} replicates");
    assert!(rate(hits) >= 0.7, "{hits}/{REPS}");
}
