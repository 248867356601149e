use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pcfit_bench::{ar2_series, sin_series, stage2_qp};
use pcfit_core::pcf::{fit_pcf, PcfConfig};
use pcfit_core::pcic::{forward_knot_selection, SelectionConfig};
use pcfit_core::qp::{solve_active_set, solve_psor, PsorOptions};
use pcfit_core::spectral::{default_num_tapers, multiwindow_spectrum, pcf_log_spectrum};
use pcfit_core::splines::{gcv_for_series, SplineBasis};

fn splines(c: &mut Criterion) {
    let mut group = c.benchmark_group("spline");
    for n in [500, 4000] {
        let series = sin_series(n);
        let basis = SplineBasis::for_series(&series, 2).unwrap();
        group.bench_with_input(BenchmarkId::new("fit", n), &n, |b, _| {
            b.iter(|| basis.fit(black_box(series.y()), 1e-5).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("gcv", n), &n, |b, _| {
            b.iter(|| gcv_for_series(black_box(&series), 2).unwrap())
        });
    }
    group.finish();
}

fn qp(c: &mut Criterion) {
    let mut group = c.benchmark_group("stage2_qp");
    for (name, gaps) in [("intervals", false), ("gaps", true)] {
        let qp = stage2_qp(500, gaps);
        group.bench_function(BenchmarkId::new("active_set", name), |b| {
            b.iter(|| solve_active_set(black_box(&qp), 1e-9).unwrap())
        });
        group.bench_function(BenchmarkId::new("psor", name), |b| {
            b.iter(|| solve_psor(black_box(&qp), PsorOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn pipelines(c: &mut Criterion) {
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    let series = sin_series(500);
    group.bench_function("fit_pcf_500", |b| {
        b.iter(|| fit_pcf(black_box(&series), &PcfConfig::default()).unwrap())
    });
    let x = ar2_series(4096);
    let k = default_num_tapers(x.len());
    group.bench_function("multiwindow_4096", |b| {
        b.iter(|| multiwindow_spectrum(black_box(&x), k).unwrap())
    });
    let est = multiwindow_spectrum(&x, k).unwrap();
    group.bench_function("log_spectrum_fit_4096", |b| {
        b.iter(|| pcf_log_spectrum(black_box(&est), &PcfConfig::default()).unwrap())
    });
    let short = sin_series(200);
    group.bench_function("knot_selection_200", |b| {
        b.iter(|| forward_knot_selection(black_box(&short), &SelectionConfig::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, splines, qp, pipelines);
criterion_main!(benches);
