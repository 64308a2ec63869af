use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use secest_core::attacks::AttackModel;
use secest_core::control::solve_dare;
use secest_core::fusion::{self, EstimatorMode, FusionConfig, FusionEstimator};
use secest_core::kalman::{predict, update, KalmanState};
use secest_core::lti::simulate_open_loop;
use secest_core::scenario::{run_scenario, ScenarioConfig};
use secest_core::LtiSystem;

fn stable_system(seed: u64, n: usize, p: usize) -> LtiSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    a *= 0.7 / secest_core::linalg::spectral_radius(&a);
    let b = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
    let c = DMatrix::from_fn(p, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    LtiSystem::new(a, b, c).unwrap()
}

#[test]
fn covariance_converges_to_riccati_solution() {
    let sys = stable_system(4, 3, 2);
    let qn = DMatrix::identity(3, 3) * 0.01;
    let rn = DMatrix::identity(2, 2) * 0.1;
    let mut ks = KalmanState::new(
        DVector::zeros(3),
        DMatrix::identity(3, 3),
        qn.clone(),
        rn.clone(),
    )
    .unwrap();
    let u = DVector::zeros(1);
    for _ in 0..100 {
        ks = predict(&update(&ks, &sys, &DVector::zeros(2)).unwrap(), &sys, &u).unwrap();
    }
    let dare = solve_dare(&sys.a().transpose(), &sys.c().transpose(), &qn, &rn).unwrap();
    assert!((&ks.p - &dare).amax() < 1e-6, "{}", (&ks.p - &dare).amax());
}

#[test]
fn update_matches_textbook_form() {
    let sys = stable_system(9, 4, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let l = DMatrix::from_fn(4, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
    let p0 = &l * l.transpose() + DMatrix::identity(4, 4);
    let rn = DMatrix::identity(3, 3) * 0.3;
    let x0 = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
    let ks = KalmanState::new(x0.clone(), p0.clone(), DMatrix::zeros(4, 4), rn.clone()).unwrap();
    let got = update(&ks, &sys, &y).unwrap();

    let c = sys.c();
    let s_inv = (c * &p0 * c.transpose() + &rn).try_inverse().unwrap();
    let k = &p0 * c.transpose() * s_inv;
    let x = &x0 + &k * (&y - c * &x0);
    let p = (DMatrix::identity(4, 4) - &k * c) * &p0;
    assert!((&got.x_hat - x).amax() < 1e-12);
    assert!((&got.p - p).amax() < 1e-12);
}

#[test]
fn decoder_is_inert_without_attacks() {
    let sys = stable_system(12, 4, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inputs: Vec<_> = (0..60)
        .map(|_| DVector::from_element(1, rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let x0 = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
    let traj = simulate_open_loop(&sys, &x0, &inputs).unwrap();
    let run = |mode| {
        let kf = KalmanState::isotropic(DVector::zeros(4), 1e-4, 0.1, 4);
        let mut est = FusionEstimator::new(&sys, 6, mode, kf, FusionConfig::default()).unwrap();
        fusion::run(&mut est, &traj, None).unwrap()
    };
    let (kf, kfse) = (run(EstimatorMode::KfOnly), run(EstimatorMode::KfPlusSe));
    for (a, b) in kf.x_hat.iter().zip(&kfse.x_hat) {
        assert!((a - b).amax() <= 1e-10);
    }
}

fn quiet(mut cfg: ScenarioConfig) -> ScenarioConfig {
    cfg.attack = AttackModel::none();
    cfg.horizon = 120;
    cfg
}

#[test]
fn scenarios_reduce_to_kalman_filter_without_attack_or_noise() {
    for base in [ScenarioConfig::mitm(), ScenarioConfig::gps()] {
        let mut cfg = quiet(base);
        cfg.noise_std = 0.0;
        let report = run_scenario(&cfg).unwrap();
        let kf = report.mode(EstimatorMode::KfOnly).unwrap();
        let kfse = report.mode(EstimatorMode::KfPlusSe).unwrap();
        for (a, b) in kf.x_hat.iter().zip(&kfse.x_hat) {
            assert!((a - b).amax() <= 1e-10);
        }
    }
}

#[test]
fn noisy_attack_free_fusion_tracks_kalman_filter() {
    let report = run_scenario(&quiet(ScenarioConfig::mitm())).unwrap();
    let kf = report.metrics(EstimatorMode::KfOnly).unwrap().state_rmse;
    let kfse = report.metrics(EstimatorMode::KfPlusSe).unwrap().state_rmse;
    assert!((kfse - kf).abs() <= 0.05 * kf, "kf {kf}, kf+se {kfse}");
}
