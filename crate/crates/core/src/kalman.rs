//! Discrete-time Kalman filter over an [`LtiSystem`].

use nalgebra::{DMatrix, DVector};

use crate::error::{dim, Error, Result};
use crate::linalg;
use crate::lti::LtiSystem;

#[derive(Clone, Debug, PartialEq)]
pub struct KalmanState {
    pub x_hat: DVector<f64>,
    pub p: DMatrix<f64>,
    /// Process-noise covariance.
    pub qn: DMatrix<f64>,
    /// Measurement-noise covariance.
    pub rn: DMatrix<f64>,
}

impl KalmanState {
    pub fn new(
        x_hat: DVector<f64>,
        p: DMatrix<f64>,
        qn: DMatrix<f64>,
        rn: DMatrix<f64>,
    ) -> Result<Self> {
        let n = x_hat.len();
        if p.shape() != (n, n) || qn.shape() != (n, n) {
            return Err(dim(format!("covariances must be {n}x{n}")));
        }
        if rn.nrows() != rn.ncols() {
            return Err(dim("measurement covariance must be square"));
        }
        Ok(Self { x_hat, p, qn, rn })
    }

    /// `P0 = I`, `Qn = q I`, `Rn = sigma^2 I`.
    pub fn isotropic(
        x_hat: DVector<f64>,
        process_var: f64,
        measurement_std: f64,
        p: usize,
    ) -> Self {
        let n = x_hat.len();
        Self {
            x_hat,
            p: DMatrix::identity(n, n),
            qn: DMatrix::identity(n, n) * process_var,
            rn: DMatrix::identity(p, p) * measurement_std.powi(2),
        }
    }

    /// Smallest eigenvalue of the (symmetric) covariance.
    pub fn min_covariance_eigenvalue(&self) -> f64 {
        self.p.clone().symmetric_eigenvalues().min()
    }
}

/// `x <- A x + B u`, `P <- A P A^T + Qn`.
pub fn predict(ks: &KalmanState, sys: &LtiSystem, u: &DVector<f64>) -> Result<KalmanState> {
    if ks.x_hat.len() != sys.n() || u.len() != sys.m() {
        return Err(dim(format!(
            "predict expects x in R^{} and u in R^{}",
            sys.n(),
            sys.m()
        )));
    }
    let a = sys.a();
    let mut p = a * &ks.p * a.transpose() + &ks.qn;
    linalg::symmetrize(&mut p);
    Ok(KalmanState {
        x_hat: a * &ks.x_hat + sys.b() * u,
        p,
        qn: ks.qn.clone(),
        rn: ks.rn.clone(),
    })
}

/// Measurement update with gain `K = P C^T S^{-1}`.
pub fn update(ks: &KalmanState, sys: &LtiSystem, y: &DVector<f64>) -> Result<KalmanState> {
    let c = sys.c();
    if y.len() != sys.p() || ks.rn.nrows() != sys.p() {
        return Err(dim(format!("update expects y in R^{}", sys.p())));
    }
    let pct = &ks.p * c.transpose();
    let s = c * &pct + &ks.rn;
    let chol = s.clone().cholesky().ok_or(Error::SingularInnovation)?;
    let diag_max = s.diagonal().amax();
    let diag_min = chol
        .l()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, &d| m.min(d * d));
    if diag_max == 0.0 || diag_min <= 1e-14 * diag_max {
        return Err(Error::SingularInnovation);
    }
    // K^T = S^{-1} (P C^T)^T
    let gain = chol.solve(&pct.transpose()).transpose();
    let innovation = y - c * &ks.x_hat;
    let n = sys.n();
    let mut p = (DMatrix::identity(n, n) - &gain * c) * &ks.p;
    linalg::symmetrize(&mut p);
    Ok(KalmanState {
        x_hat: &ks.x_hat + &gain * innovation,
        p,
        qn: ks.qn.clone(),
        rn: ks.rn.clone(),
    })
}
