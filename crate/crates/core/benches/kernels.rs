//! Kernel timings under a one-thread pool and the default pool.
//!
//! `cargo bench -p cssigma` measures the rayon backend; add
//! `--no-default-features` for the sequential baseline (both pool variants
//! then run the same sequential code).

use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPool;

use cssigma::dynamics::{rhs_first_order, step, Model, Scheme};
use cssigma::estimates::{empirical_ratio, instantiation_exponents, RatioWindow};
use cssigma::initdata::lorenz_gauge_sample;
use cssigma::par;
use cssigma::spectral::Grid;

fn pools() -> Vec<(String, ThreadPool)> {
    let default = rayon::ThreadPoolBuilder::new().build().unwrap();
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let backend = if par::is_parallel() { "rayon" } else { "seq" };
    vec![
        (format!("{backend}-single"), single),
        (
            format!("{backend}-pool{}", default.current_num_threads()),
            default,
        ),
    ]
}

fn rhs(c: &mut Criterion) {
    let mut group = c.benchmark_group("rhs");
    let model = Model::default();
    for n in [64, 128] {
        let s = lorenz_gauge_sample(&Grid::new(n, 20.0).unwrap(), 3);
        for (label, pool) in pools() {
            group.bench_with_input(BenchmarkId::new(label, n), &s, |b, s| {
                pool.install(|| b.iter(|| rhs_first_order(black_box(s), &model)))
            });
        }
    }
    group.finish();
}

fn steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    group.sample_size(20);
    let model = Model::default();
    let s = lorenz_gauge_sample(&Grid::new(128, 20.0).unwrap(), 5);
    for scheme in [Scheme::Rk4, Scheme::Trig] {
        for (label, pool) in pools() {
            let id = BenchmarkId::new(label, format!("{scheme:?}"));
            group.bench_with_input(id, &s, |b, s| {
                pool.install(|| b.iter(|| step(black_box(s), 1e-3, scheme, &model).unwrap()))
            });
        }
    }
    group.finish();
}

fn ratio_trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("ratio_trials");
    group.sample_size(10);
    let p = instantiation_exponents(1.1, 0.0)[1];
    let g = Grid::new(32, 2.0 * PI).unwrap();
    let w = RatioWindow {
        dt: 0.1,
        samples: 32,
        band: 5,
        seed: 1,
    };
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::new(label, 8), |b| {
            pool.install(|| b.iter(|| empirical_ratio(&p, 8, &g, &w).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, rhs, steps, ratio_trials);
criterion_main!(benches);
