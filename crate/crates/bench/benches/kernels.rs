use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use fmtl_bench::{gaussian_vectors, paired_samples, ModelFixture};
use fmtl_core::evalstat::{friedman_nemenyi, wilcoxon_signed_rank};
use fmtl_core::fedcore::{fedamp_weights, matfl_weights, mean_vectors};
use fmtl_core::models::{forward_backward, ArchKind};
use fmtl_core::mtlopt::{cagrad, pcgrad, CagradConfig, GradientSet};
use fmtl_core::numkernel::RngStream;

fn networks(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_backward");
    for arch in [ArchKind::Md, ArchKind::Tc] {
        let f = ModelFixture::new(arch, 32);
        let batch = f.batch();
        group.bench_function(BenchmarkId::from_parameter(arch), |b| {
            b.iter(|| forward_backward(f.arch, &f.params, black_box(&batch), &f.weights).unwrap())
        });
    }
    group.finish();
}

fn aggregation(c: &mut Criterion) {
    let mut group = c.benchmark_group("aggregate");
    for k in [4usize, 8] {
        let vecs = gaussian_vectors(k, 1118, 3);
        let views: Vec<&[f64]> = vecs.iter().map(|v| v.as_slice()).collect();
        group.bench_with_input(BenchmarkId::new("mean", k), &views, |b, v| {
            b.iter(|| mean_vectors(black_box(v)))
        });
        group.bench_with_input(BenchmarkId::new("fedamp", k), &views, |b, v| {
            b.iter(|| fedamp_weights(black_box(v), 0.5, 1.0))
        });
        group.bench_with_input(BenchmarkId::new("matfl", k), &views, |b, v| {
            b.iter(|| matfl_weights(black_box(v), 1.0, 1.0))
        });
    }
    group.finish();
}

fn surgery(c: &mut Criterion) {
    let mut group = c.benchmark_group("surgery");
    let set = GradientSet::from_vecs(gaussian_vectors(4, 3739, 5)).unwrap();
    group.bench_function("pcgrad", |b| {
        let mut rng = RngStream::new(0, 0);
        b.iter(|| pcgrad(black_box(&set), &mut rng))
    });
    let cfg = CagradConfig::default();
    group.bench_function("cagrad", |b| b.iter(|| cagrad(black_box(&set), &cfg)));
    group.finish();
}

fn statistics(c: &mut Criterion) {
    let mut group = c.benchmark_group("stats");
    for n in [12usize, 25, 60] {
        let (x, y) = paired_samples(n, 7);
        group.bench_with_input(BenchmarkId::new("wilcoxon", n), &(x, y), |b, (x, y)| {
            b.iter(|| wilcoxon_signed_rank(black_box(x), black_box(y)).unwrap())
        });
    }
    let labels: Vec<String> = (0..8).map(|i| format!("b{i}")).collect();
    let scores = gaussian_vectors(40, 8, 9);
    let lower = vec![false; scores.len()];
    group.bench_function("friedman_nemenyi", |b| {
        b.iter(|| friedman_nemenyi(&labels, black_box(&scores), &lower, 0.05).unwrap())
    });
    group.finish();
}

criterion_group!(benches, networks, aggregation, surgery, statistics);
criterion_main!(benches);
