//! Equality-constrained l1 minimization, `min ||e||_1 s.t. M e = b`.
//!
//! The program is solved as the linear program
//!
//! ```text
//! min 1'(e+ + e-)   s.t.  [M  -M] [e+; e-] = b,   e+, e- >= 0
//! ```
//!
//! with a two-phase revised simplex method. Sizes here are small (a few
//! hundred columns at most), so the basis is refactorized from scratch on
//! every iteration instead of carrying product-form updates. Pricing is
//! Dantzig's rule; after a run of degenerate pivots the method switches to
//! Bland's rule, which cannot cycle. Everything is deterministic.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_TOL_FEAS: f64 = 1e-8;
pub const DEFAULT_TOL_OPT: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 5000;

const PRICE_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_STREAK: usize = 50;
/// Pivots between fresh factorizations of the basis.
const REFACTOR_EVERY: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub tol_feas: f64,
    pub tol_opt: f64,
    pub max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_feas: DEFAULT_TOL_FEAS,
            tol_opt: DEFAULT_TOL_OPT,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Clone, Debug)]
pub struct L1Problem {
    m: DMatrix<f64>,
    b: DVector<f64>,
    config: SolverConfig,
}

impl L1Problem {
    pub fn new(m: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        Self::with_config(m, b, SolverConfig::default())
    }

    pub fn with_config(m: DMatrix<f64>, b: DVector<f64>, config: SolverConfig) -> Result<Self> {
        let (r, c) = m.shape();
        if r == 0 || c == 0 {
            return Err(Error::InvalidProblem(format!(
                "empty constraint matrix {r}x{c}"
            )));
        }
        if r >= c {
            return Err(Error::InvalidProblem(format!(
                "expected fewer rows than columns, got {r}x{c}"
            )));
        }
        if b.len() != r {
            return Err(Error::InvalidProblem(format!(
                "b has length {}, expected {r}",
                b.len()
            )));
        }
        if !(config.tol_feas > 0.0 && config.tol_opt > 0.0) || config.max_iters == 0 {
            return Err(Error::InvalidProblem(
                "tolerances and iteration budget must be positive".into(),
            ));
        }
        if m.iter().chain(b.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidProblem("non-finite data".into()));
        }
        Ok(Self { m, b, config })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }
    pub fn rhs(&self) -> &DVector<f64> {
        &self.b
    }
    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Feasibility threshold `tol_feas * (1 + ||b||_2)`.
    pub fn feasibility_bound(&self) -> f64 {
        self.config.tol_feas * (1.0 + self.b.norm())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    Optimal,
    MaxIters,
    Infeasible,
}

#[derive(Clone, Debug)]
pub struct L1Solution {
    pub e_hat: DVector<f64>,
    pub objective: f64,
    pub feas_residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Indices with `|e_i| > eps`; `None` selects `1e-6 * max(1, ||e||_inf)`.
pub fn thresholded_support(e_hat: &DVector<f64>, eps: Option<f64>) -> Vec<usize> {
    let eps = eps.unwrap_or_else(|| default_support_eps(e_hat));
    e_hat
        .iter()
        .enumerate()
        .filter(|(_, x)| x.abs() > eps)
        .map(|(i, _)| i)
        .collect()
}

pub fn default_support_eps(e_hat: &DVector<f64>) -> f64 {
    1e-6 * e_hat.amax().max(1.0)
}

pub fn solve_l1_equality(prob: &L1Problem) -> L1Solution {
    let mut lp = StandardForm::new(prob);
    let outcome = lp.run(prob.config.max_iters);
    let status = match outcome {
        Outcome::Optimal => SolveStatus::Optimal,
        Outcome::Infeasible => SolveStatus::Infeasible,
        Outcome::Stalled => SolveStatus::MaxIters,
    };
    let e_hat = lp.primal();
    let feas_residual = (&prob.m * &e_hat - &prob.b).norm();
    let status = if status == SolveStatus::Optimal && feas_residual > prob.feasibility_bound() {
        SolveStatus::Infeasible
    } else {
        status
    };
    L1Solution {
        objective: e_hat.lp_norm(1),
        e_hat,
        feas_residual,
        iterations: lp.iterations,
        status,
    }
}

enum Outcome {
    Optimal,
    Infeasible,
    Stalled,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

/// `[sM, -sM, I] z = s b` with `s` flipping rows so the right-hand side is nonnegative.
struct StandardForm {
    a: DMatrix<f64>,
    rhs: DVector<f64>,
    c: usize,
    r: usize,
    basis: Vec<usize>,
    x_basic: DVector<f64>,
    iterations: usize,
    tol_feas: f64,
}

impl StandardForm {
    fn new(prob: &L1Problem) -> Self {
        let (r, c) = prob.m.shape();
        let mut a = DMatrix::zeros(r, 2 * c + r);
        let mut rhs = prob.b.clone();
        for i in 0..r {
            let s = if prob.b[i] < 0.0 { -1.0 } else { 1.0 };
            rhs[i] *= s;
            for j in 0..c {
                a[(i, j)] = s * prob.m[(i, j)];
                a[(i, c + j)] = -s * prob.m[(i, j)];
            }
            a[(i, 2 * c + i)] = 1.0;
        }
        let basis = (2 * c..2 * c + r).collect();
        Self {
            x_basic: rhs.clone(),
            a,
            rhs,
            c,
            r,
            basis,
            iterations: 0,
            tol_feas: prob.config.tol_feas,
        }
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= 2 * self.c
    }

    fn cost(&self, phase: Phase, j: usize) -> f64 {
        match (phase, self.is_artificial(j)) {
            (Phase::One, true) | (Phase::Two, false) => 1.0,
            _ => 0.0,
        }
    }

    fn basis_inverse(&self) -> Option<DMatrix<f64>> {
        let mut bm = DMatrix::zeros(self.r, self.r);
        for (k, &j) in self.basis.iter().enumerate() {
            bm.set_column(k, &self.a.column(j));
        }
        bm.lu().try_inverse()
    }

    fn refresh_primal(&mut self) -> bool {
        let mut bm = DMatrix::zeros(self.r, self.r);
        for (k, &j) in self.basis.iter().enumerate() {
            bm.set_column(k, &self.a.column(j));
        }
        match bm.lu().solve(&self.rhs) {
            Some(x) => {
                self.x_basic = x;
                true
            }
            None => false,
        }
    }

    fn run(&mut self, max_iters: usize) -> Outcome {
        match self.iterate(Phase::One, max_iters) {
            Some(true) => {}
            Some(false) => return Outcome::Stalled,
            None => return Outcome::Stalled,
        }
        self.refresh_primal();
        let infeasibility: f64 = self
            .basis
            .iter()
            .zip(self.x_basic.iter())
            .filter(|(&j, _)| self.is_artificial(j))
            .map(|(_, x)| x.abs())
            .sum();
        let scale = 1.0 + self.rhs.norm();
        if infeasibility > self.tol_feas * scale {
            return Outcome::Infeasible;
        }
        self.drive_out_artificials();
        match self.iterate(Phase::Two, max_iters) {
            Some(true) => {
                self.refresh_primal();
                Outcome::Optimal
            }
            _ => {
                self.refresh_primal();
                Outcome::Stalled
            }
        }
    }

    /// Pivot zero-level artificials out of the basis where an original column allows it.
    fn drive_out_artificials(&mut self) {
        for row in 0..self.r {
            if !self.is_artificial(self.basis[row]) {
                continue;
            }
            let Some(inv) = self.basis_inverse() else {
                return;
            };
            let inv_row = inv.row(row);
            let entering = (0..2 * self.c)
                .filter(|j| !self.basis.contains(j))
                .map(|j| (j, (inv_row * self.a.column(j))[0]))
                .filter(|(_, w)| w.abs() > 1e-7)
                .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()));
            if let Some((j, _)) = entering {
                self.basis[row] = j;
            }
        }
        self.refresh_primal();
    }

    /// Returns `Some(true)` at optimality, `Some(false)` when the budget runs
    /// out and `None` on a numerical breakdown.
    fn iterate(&mut self, phase: Phase, max_iters: usize) -> Option<bool> {
        let n_cols = self.a.ncols();
        let mut degenerate_streak = 0usize;
        let mut in_basis = vec![false; n_cols];
        let mut inv = self.basis_inverse()?;
        let mut since_refactor = 0usize;
        loop {
            if self.iterations >= max_iters {
                return Some(false);
            }
            if since_refactor >= REFACTOR_EVERY {
                inv = self.basis_inverse()?;
                since_refactor = 0;
            }
            self.x_basic = &inv * &self.rhs;
            let cost_b =
                DVector::from_iterator(self.r, self.basis.iter().map(|&j| self.cost(phase, j)));
            let duals = inv.tr_mul(&cost_b);
            let priced = self.a.tr_mul(&duals);

            in_basis.iter_mut().for_each(|f| *f = false);
            self.basis.iter().for_each(|&j| in_basis[j] = true);
            let bland = degenerate_streak > DEGENERATE_STREAK;
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..n_cols {
                if in_basis[j] || (phase == Phase::Two && self.is_artificial(j)) {
                    continue;
                }
                let d = self.cost(phase, j) - priced[j];
                if d < -PRICE_TOL {
                    match entering {
                        None => entering = Some((j, d)),
                        Some((_, best)) if !bland && d < best => entering = Some((j, d)),
                        _ => {}
                    }
                    if bland {
                        break;
                    }
                }
            }
            let Some((j, _)) = entering else {
                return Some(true);
            };

            let w = &inv * self.a.column(j);
            let mut leave: Option<(usize, f64, f64)> = None;
            for i in 0..self.r {
                let wi = w[i];
                let ratio = if phase == Phase::Two && self.is_artificial(self.basis[i]) {
                    if wi.abs() <= PIVOT_TOL {
                        continue;
                    }
                    0.0
                } else {
                    if wi <= PIVOT_TOL {
                        continue;
                    }
                    self.x_basic[i].max(0.0) / wi
                };
                let better = match leave {
                    None => true,
                    Some((li, lr, lw)) => {
                        let tie = (ratio - lr).abs() <= 1e-12 * (1.0 + lr.abs());
                        if tie {
                            if bland {
                                self.basis[i] < self.basis[li]
                            } else {
                                wi.abs() > lw
                            }
                        } else {
                            ratio < lr
                        }
                    }
                };
                if better {
                    leave = Some((i, ratio, wi.abs()));
                }
            }
            // The objective is bounded below by zero, so an unbounded ray is a
            // numerical artefact.
            let (row, ratio, _) = leave?;
            degenerate_streak = if ratio == 0.0 {
                degenerate_streak + 1
            } else {
                0
            };
            self.basis[row] = j;
            self.iterations += 1;
            since_refactor += 1;
            // Product-form update: row-reduce the inverse on the pivot entry.
            let pivot_row = inv.row(row) / w[row];
            for i in 0..self.r {
                if i != row && w[i] != 0.0 {
                    let updated = inv.row(i) - &pivot_row * w[i];
                    inv.set_row(i, &updated);
                }
            }
            inv.set_row(row, &pivot_row);
        }
    }

    fn primal(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.c);
        for (&j, &x) in self.basis.iter().zip(self.x_basic.iter()) {
            if j < self.c {
                e[j] += x;
            } else if j < 2 * self.c {
                e[j - self.c] -= x;
            }
        }
        e
    }
}
