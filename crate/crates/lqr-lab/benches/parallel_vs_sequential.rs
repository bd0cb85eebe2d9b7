//! Parallel-vs-sequential comparison for the data-parallel hot paths.
//!
//! The `parallel` baseline uses the crate's default rayon mapping; the
//! `sequential` baseline runs the same work inside a single-thread pool, which
//! measures the true serial path plus pool overhead. Results are identical by
//! construction, only the wall time differs.

use criterion::{criterion_group, criterion_main, Criterion};

use lqr_lab::bounds;
use lqr_lab::sweep::{self, BoundSuiteConfig, GridConfig, LinearSweepConfig};

fn single_thread_pool() -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("pool construction")
}

fn linear_sweep_config() -> LinearSweepConfig {
    LinearSweepConfig {
        grid: GridConfig {
            start: Some(1e-4),
            stop: Some(3.0),
            points: 64,
            ..GridConfig::default()
        },
        ..LinearSweepConfig::default()
    }
}

fn bench_linear_sweep(c: &mut Criterion) {
    let cfg = linear_sweep_config();
    let mut group = c.benchmark_group("linear_sweep");
    group.bench_function("parallel", |b| {
        b.iter(|| sweep::run_linear_sweep(&cfg).expect("sweep"))
    });
    let pool = single_thread_pool();
    group.bench_function("sequential", |b| {
        b.iter(|| pool.install(|| sweep::run_linear_sweep(&cfg).expect("sweep")))
    });
    group.finish();
}

fn bench_matrix_lemmas(c: &mut Criterion) {
    let mut group = c.benchmark_group("matrix_lemmas_1000");
    group.bench_function("parallel", |b| {
        b.iter(|| bounds::matrix_lemma_checks(1000, 5, 7).expect("trials"))
    });
    let pool = single_thread_pool();
    group.bench_function("sequential", |b| {
        b.iter(|| pool.install(|| bounds::matrix_lemma_checks(1000, 5, 7).expect("trials")))
    });
    group.finish();
}

fn bench_bound_suite(c: &mut Criterion) {
    let cfg = BoundSuiteConfig {
        systems: 20,
        matrix_trials: 100,
        first_step_eps: vec![0.05, 0.2],
        ..BoundSuiteConfig::default()
    };
    let mut group = c.benchmark_group("bound_suite_20_systems");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| sweep::run_bound_suite(&cfg).expect("suite"))
    });
    let pool = single_thread_pool();
    group.bench_function("sequential", |b| {
        b.iter(|| pool.install(|| sweep::run_bound_suite(&cfg).expect("suite")))
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_linear_sweep,
    bench_matrix_lemmas,
    bench_bound_suite
);
criterion_main!(benches);
