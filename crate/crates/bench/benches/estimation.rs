use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use proxci::bridge::fit_treatment_bridge;
use proxci::discrete::identify;
use proxci::estimators::{proximal_ate, ProximalLayouts};
use proxci::layout::TermLayout;
use proxci_bench::{banded_law, default_dataset};

fn treatment_bridge(c: &mut Criterion) {
    let mut group = c.benchmark_group("treatment_bridge");
    for n in [2_000, 20_000] {
        let data = default_dataset(n, 1);
        let (q, target) = (TermLayout::treatment_bridge(&data), TermLayout::outcome_bridge(&data));
        group.bench_with_input(BenchmarkId::from_parameter(n), &data, |b, d| {
            b.iter(|| fit_treatment_bridge(black_box(d), &q, &target).unwrap())
        });
    }
    group.finish();
}

fn doubly_robust_with_sandwich(c: &mut Criterion) {
    let mut group = c.benchmark_group("proximal_ate");
    for n in [2_000, 20_000] {
        let data = default_dataset(n, 2);
        let layouts = ProximalLayouts::ate_default(&data);
        group.bench_with_input(BenchmarkId::from_parameter(n), &data, |b, d| {
            b.iter(|| proximal_ate(black_box(d), &layouts).unwrap())
        });
    }
    group.finish();
}

fn discrete_identification(c: &mut Criterion) {
    let mut group = c.benchmark_group("discrete_identify");
    for d in [2, 5, 10] {
        let law = banded_law(d, 3, 3).observable();
        group.bench_with_input(BenchmarkId::from_parameter(d), &law, |b, l| b.iter(|| identify(black_box(l)).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, treatment_bridge, doubly_robust_with_sandwich, discrete_identification);
criterion_main!(benches);
