mod common;

use common::normals;
use pcfit_core::changepoint::{count_sign_changes, detect_change_points, noise_variance_estimate};
use pcfit_core::kernels::{kernel_smooth, KernelFamily, KernelSpec};
use pcfit_core::splines::SplineBasis;
use pcfit_core::SampleSeries;
use proptest::prelude::*;

fn series_of(n: usize, f: impl Fn(f64) -> f64) -> SampleSeries {
    SampleSeries::from_values((1..=n).map(|i| f(i as f64 / n as f64)).collect()).unwrap()
}

/// Grid indices at least `reach` away from both ends.
fn interior(series: &SampleSeries, reach: f64) -> impl Iterator<Item = usize> + '_ {
    let t = series.t();
    (0..t.len()).filter(move |&i| t[i] - t[0] >= reach && t[t.len() - 1] - t[i] >= reach)
}

#[test]
fn identity_derivative_is_one() {
    let series = series_of(200, |t| t);
    let d = kernel_smooth(&series, &KernelSpec::gaussian(2).unwrap(), 0.1, 1).unwrap();
    for i in 0..200 {
        assert!((d[i] - 1.0).abs() < 1e-3, "t = {}: {}", series.t()[i], d[i]);
    }
}

#[test]
fn polynomials_below_the_order_are_reproduced() {
    for (family, degree) in [
        (KernelFamily::Gaussian, 1),
        (KernelFamily::Epanechnikov, 1),
        (KernelFamily::HigherOrder { order: 4 }, 3),
    ] {
        let kernel = KernelSpec::new(family, 2).unwrap();
        let p = |t: f64| {
            (0..=degree)
                .map(|k| (k as f64 + 1.0) * (t - 0.4).powi(k))
                .sum::<f64>()
        };
        let series = series_of(400, p);
        let h = 0.08;
        let s = kernel_smooth(&series, &kernel, h, 0).unwrap();
        for i in interior(&series, kernel.support() * h) {
            let t = series.t()[i];
            assert!(
                (s[i] - p(t)).abs() < 1e-3,
                "{family:?} at {t}: {} vs {}",
                s[i],
                p(t)
            );
        }
    }
}

/// Largest interior gap between the first-derivative smooth and the centred
/// difference of the level smooth.
fn derivative_gap(n: usize) -> f64 {
    let series = series_of(n, |t| (2.0 * std::f64::consts::PI * t).sin());
    let kernel = KernelSpec::gaussian(2).unwrap();
    let h = 0.05;
    let s0 = kernel_smooth(&series, &kernel, h, 0).unwrap();
    let s1 = kernel_smooth(&series, &kernel, h, 1).unwrap();
    let delta = series.delta();
    interior(&series, kernel.support() * h + delta)
        .map(|i| ((s0[i + 1] - s0[i - 1]) / (2.0 * delta) - s1[i]).abs())
        .fold(0.0, f64::max)
}

#[test]
fn derivative_matches_centred_difference_to_second_order() {
    let coarse = derivative_gap(400);
    let fine = derivative_gap(800);
    assert!(coarse < 1e-3, "{coarse:e}");
    // halving the spacing should cut the gap by about four
    assert!(coarse / fine > 3.0, "{coarse:e} -> {fine:e}");
}

#[test]
fn odd_cubic_has_one_inflection_at_zero() {
    for n in [50, 100, 500] {
        let grid: Vec<f64> = (0..n)
            .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
            .collect();
        let g2: Vec<f64> = grid.iter().map(|x| 6.0 * x).collect();
        let cps = detect_change_points(&g2, &grid).unwrap();
        assert_eq!(cps.len(), 1, "N = {n}");
        assert!(cps[0].x.abs() <= grid[1] - grid[0], "N = {n}");
        assert_eq!(cps[0].sign_after, 1);
    }
}

#[test]
fn fitted_cubic_has_one_inflection_near_the_truth() {
    // u^3 - 3u with u = 2t - 1 inflects at t = 1/2
    for n in [50, 100, 500] {
        let series = series_of(n, |t| {
            let u = 2.0 * t - 1.0;
            u.powi(3) - 3.0 * u
        });
        let basis = SplineBasis::for_series(&series, 2).unwrap();
        let fit = basis.fit(series.y(), 1e-10).unwrap();
        let g2 = fit.eval_many(series.t(), 2).unwrap();
        let cps = detect_change_points(&g2, series.t()).unwrap();
        assert_eq!(cps.len(), 1, "N = {n}");
        assert!(
            (cps[0].x - 0.5).abs() <= series.delta(),
            "N = {n}: {}",
            cps[0].x
        );
    }
}

#[test]
fn noise_variance_monte_carlo() {
    let n = 10_000;
    let unit = SampleSeries::from_values(normals(41, 0, n)).unwrap();
    let v = noise_variance_estimate(&unit).unwrap();
    assert!((v - 1.0).abs() < 0.05, "{v}");
    let e = normals(41, 1, n);
    let line = SampleSeries::from_values(
        (0..n)
            .map(|i| 2.0 - 3.0 * i as f64 / n as f64 + 0.5 * e[i])
            .collect(),
    )
    .unwrap();
    let v = noise_variance_estimate(&line).unwrap();
    assert!((v - 0.25).abs() < 0.02, "{v}");
}

/// Sign changes counted directly from the list of non-zero signs.
fn alternations(values: &[f64]) -> usize {
    let signs: Vec<bool> = values
        .iter()
        .filter(|v| **v != 0.0)
        .map(|v| *v > 0.0)
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn detection_counts_sign_alternations(
        values in proptest::collection::vec(prop_oneof![3 => -5.0f64..5.0, 1 => Just(0.0)], 3..80),
    ) {
        let grid: Vec<f64> = (0..values.len()).map(|i| i as f64 / values.len() as f64).collect();
        let cps = detect_change_points(&values, &grid).unwrap();
        let expect = alternations(&values);
        prop_assert_eq!(cps.len(), expect);
        prop_assert_eq!(count_sign_changes(&values), expect);
        for w in cps.windows(2) {
            prop_assert!(w[0].x <= w[1].x);
            prop_assert_eq!(w[0].sign_after, -w[1].sign_after);
        }
        for c in &cps {
            prop_assert!(c.x >= grid[0] && c.x <= grid[grid.len() - 1]);
        }
    }

    #[test]
    fn smoothing_is_linear(seed in 0u64..10_000, a in -3.0f64..3.0, b in -3.0f64..3.0, deriv in 0usize..3) {
        let n = 120;
        let (y1, y2) = (normals(seed, 0, n), normals(seed, 1, n));
        let mix: Vec<f64> = y1.iter().zip(&y2).map(|(u, v)| a * u + b * v).collect();
        let kernel = KernelSpec::gaussian(2).unwrap();
        let run = |y: Vec<f64>| kernel_smooth(&SampleSeries::from_values(y).unwrap(), &kernel, 0.1, deriv).unwrap();
        let (s1, s2, sm) = (run(y1), run(y2), run(mix));
        let scale = s1.iter().chain(&s2).fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            prop_assert!((a * s1[i] + b * s2[i] - sm[i]).abs() < 1e-12 * scale);
        }
    }
}
