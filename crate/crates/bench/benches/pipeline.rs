use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hps_bench::*;
use hps_core::measure::{build_mu, ratio_scan};
use hps_core::*;

fn construction(c: &mut Criterion) {
    let mut group = c.benchmark_group("construction");
    for depth in [8, 12] {
        let spec = middle_thirds(depth);
        group.bench_with_input(BenchmarkId::new("levels", depth), &spec, |b, s| {
            b.iter(|| build_levels(black_box(s)).unwrap())
        });
    }
    let spec = near_full(14);
    group.bench_function("hierarchy/near_full_14", |b| {
        b.iter(|| hierarchy(black_box(&spec)))
    });
    group.finish();
}

fn dimension(c: &mut Criterion) {
    let mut group = c.benchmark_group("dimension");
    let long = middle_thirds(10_000);
    group.bench_function("formula/middle_thirds_1e4", |b| {
        b.iter(|| formula_dim(black_box(&long), None, 0.25).unwrap())
    });
    let spec = middle_thirds(12);
    let pairs = build_levels(&spec).unwrap().level_pairs(12);
    let scales = dyadic_scales(2, 18);
    group.bench_function("box_exact/middle_thirds_12", |b| {
        b.iter(|| box_dim_exact(black_box(&pairs), &scales).unwrap())
    });
    group.finish();
}

fn measure(c: &mut Criterion) {
    let mut group = c.benchmark_group("measure");
    let h = hierarchy(&near_full(14));
    let map = QsMap::power(2.0).unwrap();
    group.bench_function("push/near_full_14", |b| {
        b.iter(|| push_hierarchy(black_box(&map), &h, None))
    });
    let img = push_hierarchy(&map, &h, None);
    group.bench_function("mu_and_scan/near_full_14", |b| {
        b.iter(|| {
            let mu = build_mu(black_box(&img), 0.9).unwrap();
            ratio_scan(&mu, &img, None).unwrap()
        })
    });
    group.finish();
}

fn probe(c: &mut Criterion) {
    let map = QsMap::power(2.0).unwrap();
    let cfg = ProbeConfig {
        samples: 20_000,
        ..ProbeConfig::default()
    };
    c.bench_function("probe/power2_20k", |b| {
        b.iter(|| distortion_probe(black_box(&map), &cfg).unwrap())
    });
}

fn experiment(c: &mut Criterion) {
    let mut group = c.benchmark_group("experiment");
    group.sample_size(10);
    let cfg = experiment_config(12, 2.0);
    group.bench_function("near_full_12_power2", |b| {
        b.iter(|| minimality_experiment(black_box(&cfg)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, construction, dimension, measure, probe, experiment);
criterion_main!(benches);
