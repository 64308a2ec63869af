use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use secest_core::decoder::{draw_trial, AttackPattern};
use secest_core::l1::{solve_l1_equality, L1Problem};
use secest_core::quadrotor::{
    build_quadrotor, default_secure_design, MeasurementSelection, QuadrotorParams,
};
use secest_core::{
    correctability_report, Decoder, LtiSystem, MeasurementWindow, ScenarioConfig, SolverConfig,
};

fn secure_closed_loop() -> LtiSystem {
    let model = build_quadrotor(QuadrotorParams::default()).unwrap();
    let c = MeasurementSelection::new(&[1, 5]).unwrap().c();
    let design = default_secure_design(&model, &c, 1000, 3).unwrap();
    LtiSystem::new(design.a_cl, model.b, c).unwrap()
}

fn l1(c: &mut Criterion) {
    let mut group = c.benchmark_group("l1_solve");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (r, cols) in [(8, 16), (20, 50), (40, 50)] {
        let m = DMatrix::from_fn(r, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = DVector::from_fn(r, |_, _| rng.sample::<f64, _>(StandardNormal));
        let prob = L1Problem::new(m, b).unwrap();
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{r}x{cols}")),
            &prob,
            |bench, prob| bench.iter(|| solve_l1_equality(black_box(prob))),
        );
    }
    group.finish();
}

fn decode(c: &mut Criterion) {
    let sys = secure_closed_loop();
    let mut group = c.benchmark_group("decode_quadrotor");
    for window in [4, 10, 20] {
        let decoder = Decoder::new(&sys, window).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(window as u64);
        let trial = draw_trial(
            &decoder.matrices().phi,
            sys.p(),
            AttackPattern::PerStep { q: 2 },
            1.0,
            &mut rng,
        );
        let w = MeasurementWindow::new(trial.y, window, sys.p(), None).unwrap();
        let config = SolverConfig::default();
        group.bench_with_input(BenchmarkId::from_parameter(window), &w, |bench, w| {
            bench.iter(|| decoder.decode(black_box(w), &config).unwrap())
        });
    }
    group.finish();
}

fn analysis(c: &mut Criterion) {
    let sys = secure_closed_loop();
    c.bench_function("correctability_report", |bench| {
        bench.iter(|| correctability_report(black_box(&sys), 1e-8))
    });
}

fn scenario(c: &mut Criterion) {
    let mut group = c.benchmark_group("scenario");
    group.sample_size(10);
    let mut config = ScenarioConfig::mitm();
    config.horizon = 100;
    group.bench_function("mitm_100_steps", |bench| {
        bench.iter(|| secest_core::run_scenario(black_box(&config)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, l1, decode, analysis, scenario);
criterion_main!(benches);
