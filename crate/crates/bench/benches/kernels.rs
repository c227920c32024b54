//! Microbenchmarks of the hot kernels: RK4 stepping, the open- and
//! closed-loop reservoir integrators, ridge regression, spectral rescaling,
//! and extrema extraction. Loop benches run shortened windows so a full
//! criterion pass stays under a few minutes.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcbasin_core::numerics::{
    local_extrema, rescale_to_radius, rk4_step, solve_ridge, spectral_radius,
};
use rcbasin_core::reservoir::{
    closed_loop_run, open_loop_drive, random_reservoir_state, Network,
};
use rcbasin_core::systems::generate_training_signal;
use rcbasin_core::{ExtremumKind, RCConfig, Readout, Seeds, SegmentMeta, SourceSystem};

/// Shortened stage windows over the default reservoir: 100 listening steps,
/// 400 training steps.
fn bench_config() -> RCConfig {
    RCConfig {
        t_listen: 1.0,
        t_train: 5.0,
        t_predict: 6.0,
        t_trans: 5.0,
        seeds: Seeds::new(7, 7, 7),
        ..RCConfig::lorenz_defaults()
    }
}

fn random_matrix(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
}

fn rk4_lorenz_step(c: &mut Criterion) {
    let sys = SourceSystem::Lorenz;
    let x = [1.0, 1.0, 1.0];
    c.bench_function("rk4_lorenz_step", |b| {
        b.iter(|| rk4_step(&mut |_, x, dx| sys.rhs(x, dx), 0.0, black_box(&x), 0.01))
    });
}

fn spectral_kernels(c: &mut Criterion) {
    let m = random_matrix(100, 1);
    c.bench_function("spectral_radius_100", |b| {
        b.iter(|| spectral_radius(black_box(&m)))
    });
    c.bench_function("rescale_to_radius_100", |b| {
        b.iter(|| rescale_to_radius(black_box(&m), 0.5).unwrap())
    });
}

fn ridge_solve(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = DMatrix::from_fn(200, 2000, |_, _| rng.random_range(-1.0..1.0));
    let y = DMatrix::from_fn(3, 2000, |_, _| rng.random_range(-20.0..20.0));
    c.bench_function("ridge_solve_200x2000", |b| {
        b.iter(|| solve_ridge(black_box(&x), black_box(&y), 1e-3).unwrap())
    });
}

fn reservoir_loops(c: &mut Criterion) {
    let cfg = bench_config();
    let net = Network::build(&cfg).unwrap();
    let signal = generate_training_signal(&SourceSystem::Lorenz, cfg.tau, cfg.t_train).unwrap();
    c.bench_function("open_loop_drive_n100_500_steps", |b| {
        b.iter(|| open_loop_drive(black_box(&net), &signal.trajectory, &cfg, 0.0).unwrap())
    });

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w_out = DMatrix::from_fn(3, 2 * cfg.n, |_, _| rng.random_range(-0.05..0.05));
    let readout = Readout {
        w_out,
        segments: vec![SegmentMeta {
            system: SourceSystem::Lorenz.tag(),
            bias: 0.0,
        }],
    };
    let r0 = random_reservoir_state(cfg.n, 7);
    c.bench_function("closed_loop_run_n100_500_steps", |b| {
        b.iter(|| closed_loop_run(&net, &readout, &cfg, 0.0, black_box(&r0), 500, false).unwrap())
    });
}

fn extrema_scan(c: &mut Criterion) {
    let series: Vec<f64> = (0..100_000)
        .map(|i| {
            let t = i as f64 * 0.01;
            (1.3 * t).sin() + 0.4 * (0.37 * t).cos()
        })
        .collect();
    c.bench_function("local_extrema_100k", |b| {
        b.iter(|| local_extrema(black_box(&series), ExtremumKind::Maxima))
    });
}

criterion_group!(
    benches,
    rk4_lorenz_step,
    spectral_kernels,
    ridge_solve,
    reservoir_loops,
    extrema_scan
);
criterion_main!(benches);
