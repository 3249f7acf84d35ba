//! Parallel vs sequential throughput of the three hot paths: the metric
//! grid, subject-level bootstrap resampling, and population generation.
//!
//! With the default `parallel` feature this compares the rayon dispatch
//! (full pool and a 1-thread pool) against the always-available sequential
//! executor. Build with `--no-default-features` to measure the pure
//! sequential fallback build.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use protovar::exec;
use protovar::lodo::bootstrap_metric;
use protovar::metrics::MetricKind;
use protovar::noise::metric_matrix;
use protovar::seed::derive_seed;
use protovar::split::make_schedule;
use protovar::synth::{generate, AuSpec, FrameCount, PopulationSpec};
use protovar::table::{AuId, EvalTable};

fn bench_spec() -> PopulationSpec {
    PopulationSpec {
        dataset_id: "bench".into(),
        n_subjects: 40,
        frames_per_subject: FrameCount::Fixed(100),
        aus: [0.08, 0.2, 0.4, 0.6]
            .iter()
            .enumerate()
            .map(|(i, &p)| AuSpec {
                au: AuId(i as u16 + 1),
                base_rate_mean: p,
                subject_spread: 0.05,
                mu_neg: 0.0,
                mu_pos: 1.3,
                sigma_score: 1.0,
            })
            .collect(),
        seed: 7,
    }
}

#[cfg(feature = "parallel")]
fn single_thread_pool() -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
}

fn bench_exec_primitive(c: &mut Criterion) {
    // A CPU-bound task with no shared state, the shape every pipeline
    // stage reduces to.
    let work = |i: usize| {
        let mut x = derive_seed(3, "bench", i as u64);
        for _ in 0..512 {
            x = x
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
        }
        x
    };
    let n = 2048;
    let mut g = c.benchmark_group("exec_map_indexed");
    g.bench_function("dispatch", |b| {
        b.iter(|| black_box(exec::map_indexed(n, work)))
    });
    g.bench_function("sequential", |b| {
        b.iter(|| black_box(exec::map_indexed_seq(n, work)))
    });
    g.finish();
}

fn bench_metric_matrix(c: &mut Criterion) {
    let table = generate(&bench_spec()).unwrap();
    let subjects = table.subjects(None).unwrap();
    let schedule = make_schedule(&subjects, 3, 4, 11).unwrap();
    let run = |t: &EvalTable| metric_matrix(t, &schedule, "bench", &MetricKind::ALL, 0.5).unwrap();

    let mut g = c.benchmark_group("metric_matrix");
    g.sample_size(30);
    g.bench_function("dispatch", |b| b.iter(|| black_box(run(&table))));
    #[cfg(feature = "parallel")]
    {
        let pool = single_thread_pool();
        g.bench_function("one_thread", |b| {
            b.iter(|| pool.install(|| black_box(run(&table))))
        });
    }
    g.finish();
}

fn bench_bootstrap(c: &mut Criterion) {
    let spec = PopulationSpec {
        n_subjects: 20,
        frames_per_subject: FrameCount::Fixed(60),
        ..bench_spec()
    };
    let table = generate(&spec).unwrap();
    let run = |t: &EvalTable| bootstrap_metric(t, AuId(2), MetricKind::Auc, 1000, 17, 0.5).unwrap();

    let mut g = c.benchmark_group("bootstrap_1000");
    g.sample_size(20);
    g.bench_function("dispatch", |b| b.iter(|| black_box(run(&table))));
    #[cfg(feature = "parallel")]
    {
        let pool = single_thread_pool();
        g.bench_function("one_thread", |b| {
            b.iter(|| pool.install(|| black_box(run(&table))))
        });
    }
    g.finish();
}

fn bench_generate(c: &mut Criterion) {
    let spec = bench_spec();
    let mut g = c.benchmark_group("generate_population");
    g.sample_size(30);
    g.bench_function("dispatch", |b| {
        b.iter(|| black_box(generate(&spec).unwrap()))
    });
    #[cfg(feature = "parallel")]
    {
        let pool = single_thread_pool();
        g.bench_function("one_thread", |b| {
            b.iter(|| pool.install(|| black_box(generate(&spec).unwrap())))
        });
    }
    g.finish();
}

criterion_group!(
    benches,
    bench_exec_primitive,
    bench_metric_matrix,
    bench_bootstrap,
    bench_generate
);
criterion_main!(benches);
