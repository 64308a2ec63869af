mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use secest_core::min_window_length;

#[test]
fn worked_quadrotor_value() {
    assert_eq!(min_window_length(&[5; 10], 2, 5, 10).unwrap(), 46);
    assert_eq!(common::window_oracle(&[5; 10], 2, 5, 10), Some(46));
}

#[test]
fn formula_matches_subset_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    for n in 1..=8 {
        for p in 1..=8 {
            for _ in 0..6 {
                let supports: Vec<usize> = (0..n).map(|_| rng.random_range(1..=p)).collect();
                let s_min = *supports.iter().min().unwrap();
                for q in 0..=s_min.saturating_sub(1) / 2 {
                    let formula = min_window_length(&supports, q, p, n).unwrap();
                    assert_eq!(
                        Some(formula),
                        common::window_oracle(&supports, q, p, n),
                        "{supports:?} q={q} p={p}"
                    );
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 300);
}

#[test]
fn uncorrectable_budget_is_an_error() {
    assert!(min_window_length(&[5, 4, 2], 1, 5, 3).is_err());
    assert!(min_window_length(&[5, 5], 1, 5, 3).is_err());
}
