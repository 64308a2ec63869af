mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use secest_core::kalman::{predict, update, KalmanState};
use secest_core::l1::{solve_l1_equality, L1Problem};
use secest_core::lti::decoder_matrices;
use secest_core::{min_window_length, LtiSystem};

fn matrix(r: usize, c: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0..1.0f64, r * c).prop_map(move |v| DMatrix::from_vec(r, c, v))
}

fn vector(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-1.0..1.0f64, n).prop_map(DVector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn l1_objective_is_homogeneous(m in matrix(4, 9), b in vector(4), alpha in 1e-3..1e3f64) {
        prop_assume!(secest_core::linalg::rank(&m, 1e-6) == 4);
        let base = solve_l1_equality(&L1Problem::new(m.clone(), b.clone()).unwrap());
        let scaled = solve_l1_equality(&L1Problem::new(m, b * alpha).unwrap());
        prop_assert!((scaled.objective - alpha * base.objective).abs() <= 1e-8 * (1.0 + alpha * base.objective));
    }

    #[test]
    fn residual_kernel_annihilates_observability(a in matrix(3, 3), c in matrix(3, 3), window in 2usize..6) {
        let a = &a * (0.9 / secest_core::linalg::spectral_radius(&a).max(1e-3));
        prop_assume!(secest_core::linalg::rank(&c, 1e-6) == 3);
        let sys = LtiSystem::autonomous(a, c).unwrap();
        let dm = decoder_matrices(&sys, window).unwrap();
        prop_assert!((dm.q2.transpose() * &dm.phi).amax() <= 1e-10 * (1.0 + dm.phi.amax()));
    }

    #[test]
    fn window_formula_agrees_with_enumeration(p in 1usize..8, raw in prop::collection::vec(0usize..100, 1..8)) {
        let supports: Vec<usize> = raw.iter().map(|r| r % p + 1).collect();
        let n = supports.len();
        let s_min = *supports.iter().min().unwrap();
        for q in 0..=s_min.saturating_sub(1) / 2 {
            let formula = min_window_length(&supports, q, p, n).ok();
            prop_assert_eq!(formula, common::window_oracle(&supports, q, p, n));
        }
    }

    #[test]
    fn covariance_stays_symmetric_psd(a in matrix(3, 3), c in matrix(2, 3), ys in prop::collection::vec(vector(2), 1..30)) {
        let sys = LtiSystem::new(a, DMatrix::zeros(3, 1), c).unwrap_or_else(|_| {
            LtiSystem::new(DMatrix::identity(3, 3), DMatrix::zeros(3, 1), DMatrix::identity(2, 3)).unwrap()
        });
        let mut ks = KalmanState::isotropic(DVector::zeros(3), 1e-3, 0.1, 2);
        for y in &ys {
            ks = update(&predict(&ks, &sys, &DVector::zeros(1)).unwrap(), &sys, y).unwrap();
            prop_assert!((&ks.p - ks.p.transpose()).amax() == 0.0);
            prop_assert!(ks.min_covariance_eigenvalue() >= -1e-9 * (1.0 + ks.p.amax()));
        }
    }
}
