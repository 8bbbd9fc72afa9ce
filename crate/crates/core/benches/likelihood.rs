//! Sequential versus parallel replica averaging, the inner cost of every
//! PMMH iteration, and the grid quadrature used by the oracles.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use msl_core::oracles::{grid_likelihood, GridSpec};
use msl_core::parallel::Execution;
use msl_core::pmmh::{averaged_log_likelihood, MslTarget, ParamLayout, ParamTransform};
use msl_core::{model::simulate, MslParams, PriorSpec, SelectorSpace};
use nalgebra::DMatrix;

fn theta() -> MslParams {
    MslParams {
        loadings: DMatrix::from_column_slice(3, 1, &[1.0, 0.878, 1.021]),
        idio_var: vec![1.8, 6.62, 0.837],
        logvol_mean: vec![1.0, 0.625],
        persistence: vec![0.616, 0.674],
        innovation_var: vec![0.405, 0.532],
        risk_premia: vec![0.0013],
        regime_stay: 0.871,
    }
}

fn replica_averaging(c: &mut Criterion) {
    let theta = theta();
    let space = SelectorSpace::enumerate(3, 1).unwrap();
    let ys = simulate(&theta, &space, 150, 1).unwrap().returns;
    let prior = PriorSpec::default();
    let transform = ParamTransform::new(ParamLayout::full(3, 1), theta.clone(), &prior);
    let target = MslTarget::new(ys, space, prior, transform, 50);

    let mut group = c.benchmark_group("averaged_log_likelihood");
    group.sample_size(20);
    for (label, execution) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::new(label, 4), &execution, |b, &execution| {
            b.iter(|| averaged_log_likelihood(&target, &theta, 7, black_box(2), 4, execution).unwrap())
        });
    }
    group.finish();
}

fn grid_quadrature(c: &mut Criterion) {
    let theta = theta();
    let space = SelectorSpace::enumerate(3, 1).unwrap();
    let ys = simulate(&theta, &space, 3, 2).unwrap().returns;
    let mut group = c.benchmark_group("grid_likelihood");
    group.sample_size(10);
    group.bench_function("41_nodes_T3", |b| {
        b.iter(|| grid_likelihood(&theta, &space, black_box(&ys), &GridSpec::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, replica_averaging, grid_quadrature);
criterion_main!(benches);
