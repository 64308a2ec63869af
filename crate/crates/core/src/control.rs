//! State-feedback design: discrete LQR and eigenstructure pole placement.
//!
//! Sign convention throughout: `u = G x`, closed loop `A0 + B G`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{dim, Error, Result};
use crate::linalg;

pub const DARE_TOL: f64 = 1e-10;
pub const DARE_MAX_ITERS: usize = 200_000;
/// Relative singular-value threshold for the controllability rank test.
pub const CONTROLLABILITY_TOL: f64 = 1e-12;

pub fn controllability_rank(a0: &DMatrix<f64>, b: &DMatrix<f64>) -> usize {
    linalg::rank(&linalg::controllability_matrix(a0, b), CONTROLLABILITY_TOL)
}

pub fn ensure_controllable(a0: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    let n = a0.nrows();
    let rank = controllability_rank(a0, b);
    if rank < n {
        return Err(Error::Uncontrollable { rank, n });
    }
    Ok(())
}

/// Fixed point of `P = Q + A'PA - A'PB (R + B'PB)^{-1} B'PA`, iterated from `P = Q`.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n
        || b.nrows() != n
        || q.shape() != (n, n)
        || r.shape() != (b.ncols(), b.ncols())
    {
        return Err(dim("inconsistent Riccati data"));
    }
    let mut p = q.clone();
    let mut delta = f64::INFINITY;
    for _ in 0..DARE_MAX_ITERS {
        let bt_p = b.transpose() * &p;
        let s = r + &bt_p * b;
        let chol = s
            .cholesky()
            .ok_or_else(|| Error::InvalidSystem("R + B'PB is not positive definite".into()))?;
        let k = chol.solve(&(&bt_p * a));
        let mut next = q + a.transpose() * &p * a - a.transpose() * bt_p.transpose() * k;
        linalg::symmetrize(&mut next);
        delta = linalg::max_abs(&(&next - &p));
        let scale = linalg::max_abs(&next).max(1.0);
        p = next;
        if delta <= DARE_TOL * scale {
            return Ok(p);
        }
    }
    Err(Error::RiccatiDivergence {
        iterations: DARE_MAX_ITERS,
        delta,
    })
}

/// LQR feedback `G = -(R + B'PB)^{-1} B'PA`.
pub fn lqr(
    a0: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let p = solve_dare(a0, b, q, r)?;
    let bt_p = b.transpose() * &p;
    let s = r + &bt_p * b;
    let k = s
        .cholesky()
        .ok_or_else(|| Error::InvalidSystem("R + B'PB is not positive definite".into()))?
        .solve(&(&bt_p * a0));
    Ok(-k)
}

/// Orthonormal basis of the null space of `[A0 - lambda I, B]`.
fn placement_kernel(a0: &DMatrix<f64>, b: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let (n, m) = (a0.nrows(), b.ncols());
    let mut stacked_t = DMatrix::zeros(n + m, n);
    stacked_t
        .view_mut((0, 0), (n, n))
        .copy_from(&(a0 - DMatrix::identity(n, n) * lambda).transpose());
    stacked_t.view_mut((n, 0), (m, n)).copy_from(&b.transpose());
    let qr = stacked_t.qr();
    let mut q_t = DMatrix::identity(n + m, n + m);
    qr.q_tr_mul(&mut q_t);
    q_t.transpose().columns(n, m).into_owned()
}

/// Place the closed-loop eigenvalues of `A0 + B G` at `poles` (distinct reals).
///
/// For each pole an eigenvector/input pair `(v, w)` is taken from the null
/// space of `[A0 - lambda I, B]` and `G = W V^{-1}`. When a requested pole is
/// already an open-loop eigenvalue the open-loop eigenvector (with `w = 0`)
/// is kept; otherwise the direction inside the null space is drawn from a
/// generator seeded with `direction_seed`. With one input the null space is
/// one-dimensional and the gain is unique.
pub fn place_poles(
    a0: &DMatrix<f64>,
    b: &DMatrix<f64>,
    poles: &[f64],
    direction_seed: u64,
) -> Result<DMatrix<f64>> {
    let (n, m) = (a0.nrows(), b.ncols());
    if poles.len() != n {
        return Err(dim(format!("{} poles requested for n = {n}", poles.len())));
    }
    if m == 0 {
        return Err(Error::Uncontrollable { rank: 0, n });
    }
    ensure_controllable(a0, b)?;
    let mut sorted = poles.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted
        .windows(2)
        .any(|w| (w[1] - w[0]).abs() <= 1e-12 * w[1].abs().max(1.0))
    {
        return Err(Error::PlacementFailed {
            reason: "poles must be distinct".into(),
            residual: 0.0,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(direction_seed);
    let mut v = DMatrix::zeros(n, n);
    let mut w = DMatrix::zeros(m, n);
    for (i, &lambda) in poles.iter().enumerate() {
        let kernel = placement_kernel(a0, b, lambda);
        let kernel_w = kernel.rows(n, m).into_owned();
        let svd = kernel_w.clone().svd(false, true);
        let v_t = svd.v_t.expect("requested V^T");
        let (imin, smin) =
            svd.singular_values
                .iter()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |acc, (j, &s)| if s < acc.1 { (j, s) } else { acc },
                );
        let draw = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let coeffs = if smin <= 1e-10 {
            v_t.row(imin).transpose()
        } else {
            draw
        };
        let pair = &kernel * coeffs;
        let scale = pair.rows(0, n).norm();
        if scale == 0.0 {
            return Err(Error::PlacementFailed {
                reason: format!("degenerate eigenvector for pole {lambda}"),
                residual: f64::INFINITY,
            });
        }
        v.set_column(i, &(pair.rows(0, n) / scale));
        w.set_column(i, &(pair.rows(n, m) / scale));
    }
    let v_inv = v
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::PlacementFailed {
            reason: "assigned eigenvectors are linearly dependent".into(),
            residual: f64::INFINITY,
        })?;
    let g = w * v_inv;

    let achieved = linalg::sorted_eigenvalues(&(a0 + b * &g));
    let residual = achieved
        .iter()
        .zip(&sorted)
        .map(|(l, &target)| (l - num_complex::Complex64::new(target, 0.0)).norm())
        .fold(0.0, f64::max);
    if residual > 1e-6 {
        return Err(Error::PlacementFailed {
            reason: "achieved spectrum misses the request".into(),
            residual,
        });
    }
    Ok(g)
}
