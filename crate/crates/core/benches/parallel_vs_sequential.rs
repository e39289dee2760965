use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use ttlab_core::correlations::exact_correlation;
use ttlab_core::mc::{mc_correlation, McConfig};
use ttlab_core::scenarios;
use ttlab_core::Workers;

fn modes() -> [(&'static str, usize); 2] {
    [("sequential", 1), ("parallel", 0)]
}

fn exact_series(c: &mut Criterion) {
    let sys = scenarios::golden_rotation().expect("catalog system");
    let h = scenarios::sawtooth_observable();
    let times: Vec<usize> = (0..200).collect();
    let mut group = c.benchmark_group("exact_correlation");
    group.sample_size(10);
    for (name, w) in modes() {
        group.bench_with_input(BenchmarkId::new(name, times.len()), &w, |b, &w| {
            b.iter(|| exact_correlation(&sys, &h, &h, black_box(&times), Workers(w)).expect("series"))
        });
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let sys = scenarios::zero_drift_mixing().expect("catalog system");
    let h = scenarios::mixing_observable();
    let mut group = c.benchmark_group("mc_correlation");
    group.sample_size(10);
    for (name, w) in modes() {
        let cfg = McConfig { workers: w, ..McConfig::new(20_000, 1) };
        group.bench_with_input(BenchmarkId::new(name, cfg.samples), &cfg, |b, cfg| {
            b.iter(|| mc_correlation(&sys, &h, &h, black_box(64), cfg).expect("estimate"))
        });
    }
    group.finish();
}

criterion_group!(benches, exact_series, monte_carlo);
criterion_main!(benches);
