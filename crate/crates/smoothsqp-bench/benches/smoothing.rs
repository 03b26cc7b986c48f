//! Benchmarks for the smoothed inner-value function and its gradient,
//! which dominate per-iteration cost on two-level problems.

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DVector;
use smoothsqp::{gamma, grad_gamma, merit_value, MeritParams, QuadratureConfig};
use smoothsqp_bench::registry_fixture;
use smoothsqp_cli::lookup;
use std::hint::black_box;

fn bench_inner_value(c: &mut Criterion) {
    let qc = QuadratureConfig::default();
    let mut group = c.benchmark_group("inner_value");
    for name in ["ex3_14", "mirrlees"] {
        let entry = lookup(name).unwrap();
        let bp = entry.bilevel().expect("two-level entry");
        let x = DVector::from_element(bp.n, 0.4);
        let rho = 1e3;
        group.bench_function(format!("{name}/value"), |b| {
            b.iter(|| gamma(black_box(&bp), black_box(&x), rho, &qc).unwrap())
        });
        group.bench_function(format!("{name}/gradient"), |b| {
            b.iter(|| grad_gamma(black_box(&bp), black_box(&x), rho, &qc).unwrap())
        });
    }
    group.finish();
}

fn bench_merit(c: &mut Criterion) {
    let (prob, x0, cfg) = registry_fixture("mirrlees");
    let mp = MeritParams::new(cfg.rho0, cfg.r0).unwrap();
    c.bench_function("merit/mirrlees", |b| {
        b.iter(|| merit_value(black_box(&prob), black_box(&x0), &mp).unwrap())
    });
}

criterion_group!(benches, bench_inner_value, bench_merit);
criterion_main!(benches);
