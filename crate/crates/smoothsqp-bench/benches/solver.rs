//! Benchmarks for the penalized subproblem solver and full solver runs on
//! the built-in problems.

use criterion::{criterion_group, criterion_main, Criterion};
use smoothsqp::{run_solver, solve_penalized_qp, KKT_TOL};
use smoothsqp_bench::{dense_subproblem, registry_fixture};
use std::hint::black_box;

fn bench_subproblem(c: &mut Criterion) {
    let qp = dense_subproblem();
    c.bench_function("qp/dense_n3", |b| {
        b.iter(|| solve_penalized_qp(black_box(&qp), KKT_TOL).unwrap())
    });
}

fn bench_full_runs(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    for name in ["corner", "diagonal", "ex3_14", "ex3_20"] {
        let (prob, x0, cfg) = registry_fixture(name);
        group.bench_function(name, |b| {
            b.iter(|| run_solver(black_box(&prob), black_box(&x0), &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_subproblem, bench_full_runs);
criterion_main!(benches);
