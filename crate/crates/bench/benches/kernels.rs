//! Microbenchmarks for the hot kernels: brackets, approximate
//! exponentials, distance field construction, and volume sampling.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use ccgeo::{
    ball_volume, commutator, exp_chain, spanning_basis, DistanceField, FieldParams, GridSpec,
    MoveSet, Polynomial, VectorField, VectorFieldSystem,
};

fn heisenberg() -> VectorFieldSystem {
    VectorFieldSystem::builtin("heisenberg1").unwrap()
}

fn quadratic_pair() -> (VectorField, VectorField) {
    let a = VectorField::new(vec![
        Polynomial::from_terms(3, vec![(0.5, vec![2, 0, 0]), (1.0, vec![0, 1, 0])]).unwrap(),
        Polynomial::from_terms(3, vec![(-1.0, vec![0, 0, 1]), (2.0, vec![1, 0, 0])]).unwrap(),
        Polynomial::from_terms(3, vec![(1.5, vec![1, 1, 0]), (1.0, vec![0, 0, 0])]).unwrap(),
    ])
    .unwrap();
    let b = VectorField::new(vec![
        Polynomial::from_terms(3, vec![(1.0, vec![0, 0, 2]), (-0.5, vec![0, 0, 0])]).unwrap(),
        Polynomial::from_terms(3, vec![(2.0, vec![0, 2, 0]), (1.0, vec![1, 0, 0])]).unwrap(),
        Polynomial::from_terms(3, vec![(-1.0, vec![1, 0, 1])]).unwrap(),
    ])
    .unwrap();
    (a, b)
}

fn small_grid() -> GridSpec {
    GridSpec::new(
        vec![-0.47, -0.47, -0.13],
        vec![0.47, 0.47, 0.13],
        vec![0.03, 0.03, 0.008],
    )
    .unwrap()
}

fn small_params() -> FieldParams {
    FieldParams { tau: 0.05, budget: 0.4, step: 0.05, moves: MoveSet::Signed, splits: 2 }
}

fn bench_bracket(c: &mut Criterion) {
    let (a, b) = quadratic_pair();
    c.bench_function("bracket_quadratic", |bench| {
        bench.iter(|| commutator(black_box(&a), black_box(&b)).unwrap())
    });
}

fn bench_chain_endpoint(c: &mut Criterion) {
    let sys = heisenberg();
    let basis = spanning_basis(&sys, &[vec![0.0; 3]], 2).unwrap();
    let index = basis.select_multi_index(&[0.0; 3], 0.2).unwrap();
    let x = [0.1, -0.05, 0.02];
    let h = [0.15, -0.1, 0.03];
    c.bench_function("chain_endpoint", |bench| {
        bench.iter(|| exp_chain(&basis, &index, black_box(&x), black_box(&h), 1e-2).unwrap())
    });
}

fn bench_field_build(c: &mut Criterion) {
    let sys = heisenberg();
    c.bench_function("distance_field_build", |bench| {
        bench.iter(|| {
            DistanceField::build(&sys, &[0.0; 3], small_params(), small_grid()).unwrap()
        })
    });
}

fn bench_ball_volume(c: &mut Criterion) {
    let sys = heisenberg();
    let field = DistanceField::build(&sys, &[0.0; 3], small_params(), small_grid()).unwrap();
    c.bench_function("ball_volume_20k", |bench| {
        bench.iter(|| ball_volume(black_box(&field), 0.25, 20_000, 7).unwrap())
    });
}

fn bench_capital_lambda(c: &mut Criterion) {
    let sys = heisenberg();
    let basis = spanning_basis(&sys, &[vec![0.0; 3]], 2).unwrap();
    let x = [0.1, -0.05, 0.02];
    c.bench_function("capital_lambda", |bench| {
        bench.iter(|| basis.capital_lambda(black_box(&x), black_box(0.3)).unwrap())
    });
}

criterion_group!(
    kernels,
    bench_bracket,
    bench_chain_endpoint,
    bench_field_build,
    bench_ball_volume,
    bench_capital_lambda
);
criterion_main!(kernels);
