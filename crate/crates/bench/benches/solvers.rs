use criterion::{criterion_group, criterion_main, Criterion};
use soqn::gnsolver::norm_constants;
use soqn::instances::random_model;
use soqn::oracle::{solve_auto, DEFAULT_STATE_CAP};
use soqn::rmfs::{build_rmfs_model, RmfsParams, RmfsSizer};
use soqn::sim::{simulate, SimConfig};
use soqn::soqn::adjust_lambda_lc;
use std::hint::black_box;

fn convolution(c: &mut Criterion) {
    let model = build_rmfs_model(&RmfsParams::default(), 550).unwrap();
    let rates = model.inner_rates();
    c.bench_function("norm_constants rmfs N=550", |b| {
        b.iter(|| norm_constants(black_box(&rates), model.traffic().inner(), 550))
    });
    c.bench_function("adjust_lambda_lc rmfs N=550", |b| b.iter(|| adjust_lambda_lc(black_box(&model), 1e-10).unwrap()));
}

fn sizing(c: &mut Criterion) {
    let params = RmfsParams::default();
    c.bench_function("stable set + sweep 18..=550", |b| {
        b.iter(|| {
            let sizer = RmfsSizer::new(&params, 1e-10).unwrap();
            let set = sizer.stable_set();
            sizer.sweep(set[0]..=550)
        })
    });
}

fn oracle(c: &mut Criterion) {
    let model = random_model(3, 3, 4, false);
    c.bench_function("oracle J<=3 N<=4", |b| {
        b.iter(|| solve_auto(black_box(&model), 1e-10, DEFAULT_STATE_CAP).unwrap())
    });
}

fn simulation(c: &mut Criterion) {
    let model = build_rmfs_model(&RmfsParams::default(), 26).unwrap();
    let cfg = SimConfig::new(86_400.0, 4, 1);
    let mut group = c.benchmark_group("simulation");
    group.sample_size(10);
    group.bench_function("rmfs N=26, 4 x 1 day", |b| b.iter(|| simulate(black_box(&model), &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, convolution, sizing, oracle, simulation);
criterion_main!(benches);
