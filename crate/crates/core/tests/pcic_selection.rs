mod common;

use common::{hinge_rss, normals};
use pcfit_core::pcic::{
    count_midpoint_changes, forward_knot_selection, lof_friedman, pcic, regression_spline,
    Criterion, LofInputs, SelectionConfig,
};
use pcfit_core::simulate::{replicate_rng, simulate, Signal};
use pcfit_core::SampleSeries;
use proptest::prelude::*;

fn draw(signal: Signal, n: usize, sigma: f64, seed: u64) -> SampleSeries {
    simulate(signal, n, sigma, &mut replicate_rng(seed, 0))
        .unwrap()
        .0
}

#[test]
fn kink_first_knot_is_the_exhaustive_optimum() {
    let n = 100;
    for seed in 0..20 {
        let series = draw(Signal::Kink, n, 0.05, seed);
        let mut best = (f64::INFINITY, 0);
        for i in 1..n - 1 {
            let rss = hinge_rss(&series, series.t()[i]);
            if rss < best.0 {
                best = (rss, i);
            }
        }
        let config = SelectionConfig {
            degree: 1,
            max_knots: 5,
            ..SelectionConfig::default()
        };
        let sel = forward_knot_selection(&series, &config).unwrap();
        let first = &sel.trace[1];
        assert_eq!(first.knot_index, Some(best.1), "seed {seed}");
        assert!((first.rss - best.0).abs() < 1e-9 * best.0, "seed {seed}");
        // t_i = (i + 1) / N, so "within two grid spacings of 0.5" in index units
        assert!(
            best.1.abs_diff(n / 2 - 1) <= 2,
            "seed {seed}: index {}",
            best.1
        );
    }
}

/// Best PCIC model among all cubic regression splines with at most two
/// interior knots at interior data points: `(score, K)`.
fn brute_force_pcic(series: &SampleSeries, sigma2: f64) -> (f64, usize) {
    let t = series.t();
    let n = series.len();
    let mut best = (f64::INFINITY, 0);
    let mut consider = |knots: &[f64]| {
        let Some((model, rss)) = regression_spline(series, 3, knots).unwrap() else {
            return;
        };
        let k = count_midpoint_changes(&model, t, 2).unwrap();
        let score = pcic(&LofInputs::new(
            rss / (n as f64 * sigma2),
            knots.len(),
            3,
            k,
            n,
        ))
        .unwrap();
        if score < best.0 {
            best = (score, k);
        }
    };
    consider(&[]);
    for i in 1..n - 1 {
        consider(&[t[i]]);
        for j in i + 1..n - 1 {
            consider(&[t[i], t[j]]);
        }
    }
    best
}

#[test]
fn piecewise_quadratic_selects_one_change_point() {
    for seed in 0..3 {
        let sigma = 0.005;
        let series = draw(Signal::PiecewiseQuadratic, 60, sigma, seed);
        let config = SelectionConfig {
            criterion: Criterion::Pcic,
            sigma2: Some(sigma * sigma),
            ..SelectionConfig::default()
        };
        let sel = forward_knot_selection(&series, &config).unwrap();
        let k = count_midpoint_changes(&sel.model, series.t(), 2).unwrap();
        assert_eq!(k, 1, "seed {seed}");
        let (_, oracle_k) = brute_force_pcic(&series, sigma * sigma);
        assert_eq!(oracle_k, 1, "seed {seed}");
    }
}

#[test]
fn bad_criterion_name_is_rejected() {
    let err = "gcv".parse::<Criterion>().unwrap_err().to_string();
    assert!(err.contains("gcv"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn pcic_without_change_points_is_friedman(
        sigma2 in 0.0f64..10.0,
        p in 0usize..20,
        m in 0usize..6,
        n in 100usize..5000,
        gamma1 in 0.5f64..4.0,
        gamma2 in 0.5f64..4.0,
    ) {
        let inputs = LofInputs { gamma1, gamma2, ..LofInputs::new(sigma2, p, m, 0, n) };
        let a = pcic(&inputs).unwrap();
        let b = lof_friedman(&inputs).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }

    #[test]
    fn pcic_increases_with_change_points(
        sigma2 in 1e-3f64..10.0,
        p in 0usize..20,
        k in 0usize..10,
        n in 100usize..5000,
    ) {
        let lo = pcic(&LofInputs::new(sigma2, p, 3, k, n)).unwrap();
        let hi = pcic(&LofInputs::new(sigma2, p, 3, k + 1, n)).unwrap();
        prop_assert!(hi > lo);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn selection_trace_decreases_and_respects_the_cap(
        seed in 0u64..10_000,
        max_knots in 0usize..5,
        criterion in prop_oneof![Just(Criterion::Friedman), Just(Criterion::Bayes), Just(Criterion::Pcic)],
    ) {
        let e = normals(seed, 0, 50);
        let y = (1..=50)
            .map(|i| {
                let t = i as f64 / 50.0;
                (6.0 * t).sin() + 0.1 * e[i - 1]
            })
            .collect();
        let series = SampleSeries::from_values(y).unwrap();
        let config = SelectionConfig { max_knots, criterion, ..SelectionConfig::default() };
        let sel = forward_knot_selection(&series, &config).unwrap();
        prop_assert!(sel.knots.len() <= max_knots);
        prop_assert_eq!(sel.trace.len(), sel.knots.len() + 1);
        for w in sel.trace.windows(2) {
            prop_assert!(w[1].criterion < w[0].criterion);
        }
    }
}
