//! Discrete-time LTI models, trajectory simulation and the stacked
//! observability structure consumed by the decoder.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim, Error, Result};
use crate::linalg;

/// Relative threshold on `|R1_ii|` below which the window is declared rank deficient.
pub const RANK_TOL: f64 = 1e-9;

/// `x(k+1) = A x(k) + B u(k)`, `y(k) = C x(k)`.
///
/// `A` is the per-step dynamics actually used for estimation: the closed loop
/// `A0 + B G` when a state feedback is folded in, the open loop otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct LtiSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl LtiSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(dim(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n {
            return Err(dim(format!("B has {} rows, expected {n}", b.nrows())));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(dim(format!(
                "C is {}x{}, expected p x {n} with p >= 1",
                c.nrows(),
                c.ncols()
            )));
        }
        if a.iter()
            .chain(b.iter())
            .chain(c.iter())
            .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidSystem("non-finite matrix entry".into()));
        }
        if let Some(i) = (0..c.nrows()).find(|&i| c.row(i).iter().all(|&x| x == 0.0)) {
            return Err(Error::InvalidSystem(format!(
                "row {i} of C is identically zero"
            )));
        }
        let r = linalg::rank(&c, 1e-12);
        if r < c.nrows() {
            return Err(Error::InvalidSystem(format!(
                "C must have full row rank {}, numerical rank is {r}",
                c.nrows()
            )));
        }
        Ok(Self { a, b, c })
    }

    /// Autonomous system (no input channel).
    pub fn autonomous(a: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        Self::new(a, DMatrix::zeros(n, 0), c)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_observable(&self) -> bool {
        linalg::rank(&linalg::observability_matrix(&self.a, &self.c), 1e-10) == self.n()
    }

    pub fn with_output(&self, c: DMatrix<f64>) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), c)
    }

    /// Load `A`, `B` (optional) and `C` from a TOML or JSON file of nested row arrays.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: SystemFile = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| parse_err(path, e))?
        } else {
            toml::from_str(&text).map_err(|e| parse_err(path, e))?
        };
        file.into_system()
    }
}

fn parse_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// On-disk form of a system: keys `A`, `B`, `C` holding nested row arrays.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemFile {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
}

impl SystemFile {
    pub fn from_system(sys: &LtiSystem) -> Self {
        Self {
            a: rows_of(sys.a()),
            b: (sys.m() > 0).then(|| rows_of(sys.b())),
            c: rows_of(sys.c()),
        }
    }

    pub fn into_system(self) -> Result<LtiSystem> {
        let a = matrix_from_rows(&self.a, "A")?;
        let c = matrix_from_rows(&self.c, "C")?;
        let b = match &self.b {
            Some(rows) if !rows.is_empty() => matrix_from_rows(rows, "B")?,
            _ => DMatrix::zeros(a.nrows(), 0),
        };
        LtiSystem::new(a, b, c)
    }
}

pub fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().cloned().collect())
        .collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(dim(format!("{name} is empty")));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(dim(format!(
            "{name} row {i} has {} entries, expected {ncols}",
            rows[i].len()
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// States `x(0..=K)`, inputs `u(0..K)`, measurements `y(0..K)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub measurements: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Stack `[C; CA; ...; CA^{T-1}]`.
pub fn build_observability(sys: &LtiSystem, window: usize) -> Result<DMatrix<f64>> {
    if window == 0 {
        return Err(dim("window length must be at least 1"));
    }
    let (n, p) = (sys.n(), sys.p());
    let mut phi = DMatrix::zeros(p * window, n);
    let mut block = sys.c().clone();
    for k in 0..window {
        phi.view_mut((k * p, 0), (p, n)).copy_from(&block);
        block = &block * sys.a();
    }
    Ok(phi)
}

/// Full QR split of the observability stack, `Phi = [Q1 Q2][R1; 0]`.
#[derive(Clone, Debug)]
pub struct DecoderMatrices {
    pub phi: DMatrix<f64>,
    pub q1: DMatrix<f64>,
    pub q2: DMatrix<f64>,
    pub r1: DMatrix<f64>,
    pub window: usize,
}

impl DecoderMatrices {
    pub fn rows(&self) -> usize {
        self.phi.nrows()
    }
    pub fn n(&self) -> usize {
        self.phi.ncols()
    }

    /// `R1^{-1} Q1^T z` by back substitution.
    pub fn solve_state(&self, z: &DVector<f64>) -> DVector<f64> {
        let rhs = self.q1.tr_mul(z);
        self.r1
            .solve_upper_triangular(&rhs)
            .expect("R1 diagonal checked at factorization")
    }
}

/// Factorize `phi` (p*T x n) into the decoder kernel.
///
/// `window` is recorded alongside so callers can slice the stacked vectors.
pub fn factorize(phi: &DMatrix<f64>, window: usize) -> Result<DecoderMatrices> {
    let (rows, n) = phi.shape();
    if n == 0 || rows < n {
        return Err(Error::UnobservableSystem {
            rank: rows.min(n),
            n,
        });
    }
    if window == 0 || rows % window != 0 {
        return Err(dim(format!(
            "{rows} rows do not split into {window} equal blocks"
        )));
    }
    let qr = phi.clone().qr();
    let r = qr.r();
    let mut q_t = DMatrix::identity(rows, rows);
    qr.q_tr_mul(&mut q_t);
    let q = q_t.transpose();

    let diag_max = (0..n).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let rank = (0..n)
        .filter(|&i| r[(i, i)].abs() > RANK_TOL * diag_max)
        .count();
    if diag_max == 0.0 || rank < n {
        return Err(Error::UnobservableSystem { rank, n });
    }

    Ok(DecoderMatrices {
        phi: phi.clone(),
        q1: q.columns(0, n).into_owned(),
        q2: q.columns(n, rows - n).into_owned(),
        r1: r.view((0, 0), (n, n)).upper_triangle(),
        window,
    })
}

/// Convenience: observability stack plus factorization.
pub fn decoder_matrices(sys: &LtiSystem, window: usize) -> Result<DecoderMatrices> {
    factorize(&build_observability(sys, window)?, window)
}

/// `x(k) = A^k x0` for `k = 0..=steps`; measurements are `C x(k)`.
pub fn simulate_closed_loop(
    sys: &LtiSystem,
    x0: &DVector<f64>,
    steps: usize,
) -> Result<Trajectory> {
    let inputs = vec![DVector::zeros(sys.m()); steps];
    simulate_open_loop(sys, x0, &inputs)
}

/// Forced recursion `x(k+1) = A x(k) + B u(k)`.
pub fn simulate_open_loop(
    sys: &LtiSystem,
    x0: &DVector<f64>,
    inputs: &[DVector<f64>],
) -> Result<Trajectory> {
    if x0.len() != sys.n() {
        return Err(dim(format!(
            "x0 has length {}, expected {}",
            x0.len(),
            sys.n()
        )));
    }
    if let Some(k) = inputs.iter().position(|u| u.len() != sys.m()) {
        return Err(dim(format!(
            "input {k} has length {}, expected {}",
            inputs[k].len(),
            sys.m()
        )));
    }
    let mut states = Vec::with_capacity(inputs.len() + 1);
    let mut measurements = Vec::with_capacity(inputs.len());
    let mut x = x0.clone();
    for u in inputs {
        measurements.push(sys.c() * &x);
        let next = sys.a() * &x + sys.b() * u;
        states.push(std::mem::replace(&mut x, next));
    }
    states.push(x);
    Ok(Trajectory {
        states,
        inputs: inputs.to_vec(),
        measurements,
    })
}
