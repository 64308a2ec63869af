//! Small dense linear-algebra helpers shared by the estimator and design code.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Numerical rank from the singular values, relative tolerance `rel_tol`.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// `[B, AB, ..., A^{n-1}B]`
pub fn controllability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut out = DMatrix::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        out.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    out
}

/// `[C; CA; ...; CA^{n-1}]`
pub fn observability_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let p = c.nrows();
    let mut out = DMatrix::zeros(n * p, n);
    let mut block = c.clone();
    for k in 0..n {
        out.view_mut((k * p, 0), (p, n)).copy_from(&block);
        block *= a;
    }
    out
}

pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex64> {
    a.complex_eigenvalues().iter().cloned().collect()
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a).iter().map(|l| l.norm()).fold(0.0, f64::max)
}

/// Eigenvalues sorted by real part, then imaginary part.
pub fn sorted_eigenvalues(a: &DMatrix<f64>) -> Vec<Complex64> {
    let mut ev = eigenvalues(a);
    ev.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    ev
}

/// Unit-norm eigenvector for `lambda`, taken as the right singular vector of
/// `A - lambda I` with the smallest singular value.
pub fn eigenvector(a: &DMatrix<f64>, lambda: Complex64) -> DVector<Complex64> {
    let n = a.nrows();
    let mut shifted: DMatrix<Complex64> = a.map(|x| Complex64::new(x, 0.0));
    for i in 0..n {
        shifted[(i, i)] -= lambda;
    }
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (imin, _) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |(bi, bs), (i, &s)| if s < bs { (i, s) } else { (bi, bs) },
            );
    let mut v: DVector<Complex64> = v_t.row(imin).transpose().map(|z| z.conj());
    // Fix the phase so the largest component is real positive.
    let (jmax, _) = v.iter().enumerate().fold((0, -1.0), |(bj, bm), (j, z)| {
        if z.norm() > bm {
            (j, z.norm())
        } else {
            (bj, bm)
        }
    });
    let pivot = v[jmax];
    if pivot.norm() > 0.0 {
        let phase = pivot / pivot.norm();
        v.iter_mut().for_each(|z| *z /= phase);
    }
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v / Complex64::new(norm, 0.0)
}

pub fn symmetrize(p: &mut DMatrix<f64>) {
    let sym = (&*p + p.transpose()) * 0.5;
    p.copy_from(&sym);
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn identity(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

/// Matrix exponential by scaling and squaring with a Taylor core.
///
/// Only used for the small (at most 4x4) continuous blocks of the plant.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.iter().fold(0.0, |acc: f64, x| acc.max(x.abs())) * n as f64;
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings as i32);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..=20 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_nilpotent_is_polynomial() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.3, 0.0, 0.0]);
        let e = expm(&a);
        assert!(
            (e - DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 1.0]))
                .abs()
                .max()
                < 1e-15
        );
    }

    #[test]
    fn expm_of_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-5.0, 0.5]));
        let e = expm(&a);
        assert!((e[(0, 0)] - (-5.0f64).exp()).abs() < 1e-13);
        assert!((e[(1, 1)] - 0.5f64.exp()).abs() < 1e-13);
    }

    #[test]
    fn eigenvector_of_rotation_block() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        for lambda in sorted_eigenvalues(&a) {
            let v = eigenvector(&a, lambda);
            let ac = a.map(|x| Complex64::new(x, 0.0));
            let r = &ac * &v - &v * lambda;
            assert!(r.norm() < 1e-12);
        }
    }

    #[test]
    fn rank_of_outer_product() {
        let u = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &u * u.transpose();
        assert_eq!(rank(&m, 1e-9), 1);
    }
}
