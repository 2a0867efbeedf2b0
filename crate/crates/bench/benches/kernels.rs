use std::hint::black_box;

use anderson_bench::realization;
use anderson_core::spectral::has_close_pair;
use anderson_core::{count_many, eigenvalues_in, Complex64, Interval, Resolvent};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn counting(c: &mut Criterion) {
    let mut g = c.benchmark_group("count_many");
    let es: Vec<f64> = (0..20).map(|k| 0.5 * k as f64).collect();
    for side in [128, 512, 2048] {
        let h = realization(1, side, 8.0);
        g.bench_with_input(BenchmarkId::new("chain", side), &h, |b, h| b.iter(|| count_many(h, black_box(&es))));
    }
    for side in [16, 32] {
        let h = realization(2, side, 4.0);
        g.bench_with_input(BenchmarkId::new("square", side), &h, |b, h| b.iter(|| count_many(h, black_box(&es))));
    }
    g.finish();
}

fn slicing(c: &mut Criterion) {
    let h = realization(1, 512, 8.0);
    let iv = Interval::new(5.9, 6.1).unwrap();
    c.bench_function("eigenvalues_in/chain/512", |b| b.iter(|| eigenvalues_in(&h, black_box(&iv))));
    let iv = Interval::new(4.0, 16.0).unwrap();
    c.bench_function("has_close_pair/chain/512", |b| b.iter(|| has_close_pair(&h, &iv, black_box(1e-6))));
}

fn resolvent(c: &mut Criterion) {
    let h = realization(1, 256, 8.0);
    let z = Complex64::new(6.0, 1e-3);
    let xs: Vec<Vec<usize>> = [4, 8, 16, 32].iter().map(|&r| vec![r]).collect();
    c.bench_function("resolvent/chain/256", |b| {
        b.iter(|| Resolvent::new(&h, black_box(z)).and_then(|r| r.block_norms_from(&[0], &xs)))
    });
}

criterion_group!(benches, counting, slicing, resolvent);
criterion_main!(benches);
