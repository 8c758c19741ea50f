//! Hot-path benchmarks: local-GP prediction (the per-iteration cost of the
//! gated sampler), hyperparameter refits, the energy statistic, and a short
//! end-to-end surrogate run on the banana target.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mhgp_core::diagnostics::energy_distance;
use mhgp_core::gp::{GaussianProcess, KernelHyper};
use mhgp_core::rng::seeded;
use mhgp_core::samplers::{mhgp_run, MhgpConfig};
use mhgp_core::targets::TargetModel;
use mhgp_core::BoConfig;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::hint::black_box;

fn banana_gp(n: usize, seed: u64) -> GaussianProcess {
    let mut r = seeded(seed);
    let hyper = KernelHyper::new(4.0, vec![5.0, 3.0], 1e-8).unwrap();
    let mut gp = GaussianProcess::new(2, hyper).unwrap().with_refit_interval(0);
    let mut target = TargetModel::banana(0.1);
    while gp.len() < n {
        let x = DVector::from_fn(2, |j, _| {
            if j == 0 {
                r.random_range(-20.0..20.0)
            } else {
                r.random_range(-30.0..15.0)
            }
        });
        let y = target.log_density(&x);
        let _ = gp.add_point(x, y);
    }
    gp
}

fn bench_local_prediction(c: &mut Criterion) {
    let mut group = c.benchmark_group("local_joint_prediction");
    for &n in &[100usize, 400, 1600] {
        let gp = banana_gp(n, 1);
        let x = DVector::from_vec(vec![0.0, 8.0]);
        let xs = DVector::from_vec(vec![2.0, 7.0]);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                let local = gp.local_subset(&x, &xs, 50).unwrap();
                black_box(local.predict_joint(&x, &xs).unwrap())
            })
        });
    }
    group.finish();
}

fn bench_refit(c: &mut Criterion) {
    let mut group = c.benchmark_group("hyperparameter_fit");
    group.sample_size(10);
    for &n in &[50usize, 120] {
        let gp = banana_gp(n, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                let mut rng = seeded(3);
                black_box(gp.fit_hyperparameters(&mut rng).unwrap())
            })
        });
    }
    group.finish();
}

fn bench_energy_distance(c: &mut Criterion) {
    let mut r = seeded(4);
    let x = DMatrix::from_fn(500, 2, |_, _| r.random_range(-1.0..1.0));
    let y = DMatrix::from_fn(500, 2, |_, _| r.random_range(-1.0..1.0));
    c.bench_function("energy_distance_500x500", |b| {
        b.iter(|| black_box(energy_distance(&x, &y).unwrap()))
    });
}

fn bench_short_mhgp_run(c: &mut Criterion) {
    let mut group = c.benchmark_group("mhgp_banana_1k");
    group.sample_size(10);
    group.bench_function("run", |b| {
        b.iter(|| {
            let mut target = TargetModel::banana(0.1);
            let bo = BoConfig::new(target.bounds().to_vec()).with_budget(30);
            let mut cfg = MhgpConfig::new(bo, DVector::from_vec(vec![-10.0, -10.0]));
            cfg.iterations = 1_000;
            cfg.seed = 5;
            black_box(mhgp_run(&mut target, &cfg).unwrap())
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_local_prediction,
    bench_refit,
    bench_energy_distance,
    bench_short_mhgp_run
);
criterion_main!(benches);
