//! Linearized 10-state quadrotor, measurement selections and the two
//! feedback designs (LQR and support-aware pole placement).
//!
//! State layout: `[p_x, v_x, th_x, dth_x, p_y, v_y, th_y, dth_y, p_z, v_z]`,
//! inputs `[th_ref_x, th_ref_y, F]`. Each lateral axis is the chain
//! position <- velocity <- angle <- angle rate, with the rate obeying
//! `d(dth)/dt = -dth / tau + (kappa / tau) th_ref`; the vertical axis is a
//! double integrator driven by thrust. Gravity is compensated in the input
//! and does not appear.

use nalgebra::{DMatrix, DVector};
use rand::{seq::index::sample, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control;
use crate::decoder::{correctability_report, CorrectabilityReport, DEFAULT_SUPPORT_EPS};
use crate::error::{Error, Result};
use crate::linalg;
use crate::lti::LtiSystem;

pub const N_STATES: usize = 10;
pub const N_INPUTS: usize = 3;
/// Indices of `p_x`, `p_y`, `p_z`.
pub const POSITIONS: [usize; 3] = [0, 4, 8];
pub const STATE_NAMES: [&str; N_STATES] = [
    "px", "vx", "thx", "dthx", "py", "vy", "thy", "dthy", "pz", "vz",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadrotorParams {
    /// Angle-rate time constant (s).
    pub tau: f64,
    /// Reference-angle gain.
    pub kappa: f64,
    /// Lateral acceleration per radian of tilt (m/s^2).
    pub gravity: f64,
    /// Vertical acceleration per unit thrust command.
    pub thrust_gain: f64,
    /// Sample period (s).
    pub dt: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            tau: 0.2,
            kappa: 1.0,
            gravity: 9.81,
            thrust_gain: 1.0,
            dt: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadrotorModel {
    pub a0: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub params: QuadrotorParams,
}

/// Exact zero-order-hold discretization of `(ac, bc)` over `dt`.
fn discretize(ac: &DMatrix<f64>, bc: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = (ac.nrows(), bc.ncols());
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(ac * dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(bc * dt));
    let e = linalg::expm(&aug);
    (
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    )
}

pub fn build_quadrotor(params: QuadrotorParams) -> Result<QuadrotorModel> {
    let QuadrotorParams {
        tau,
        kappa,
        gravity,
        thrust_gain,
        dt,
    } = params;
    if !(dt > 0.0 && tau > 0.0) || ![kappa, gravity, thrust_gain].iter().all(|x| x.is_finite()) {
        return Err(Error::Config(format!(
            "invalid quadrotor parameters {params:?}"
        )));
    }
    #[rustfmt::skip]
    let lateral_a = DMatrix::from_row_slice(4, 4, &[
        0.0, 1.0, 0.0,     0.0,
        0.0, 0.0, gravity, 0.0,
        0.0, 0.0, 0.0,     1.0,
        0.0, 0.0, 0.0,     -1.0 / tau,
    ]);
    let lateral_b = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 0.0, kappa / tau]);
    let vertical_a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let vertical_b = DMatrix::from_column_slice(2, 1, &[0.0, thrust_gain]);

    let (ad_lat, bd_lat) = discretize(&lateral_a, &lateral_b, dt);
    let (ad_vert, bd_vert) = discretize(&vertical_a, &vertical_b, dt);
    let mut a0 = DMatrix::zeros(N_STATES, N_STATES);
    let mut b = DMatrix::zeros(N_STATES, N_INPUTS);
    for axis in 0..2 {
        a0.view_mut((4 * axis, 4 * axis), (4, 4)).copy_from(&ad_lat);
        b.view_mut((4 * axis, axis), (4, 1)).copy_from(&bd_lat);
    }
    a0.view_mut((8, 8), (2, 2)).copy_from(&ad_vert);
    b.view_mut((8, 2), (2, 1)).copy_from(&bd_vert);

    control::ensure_controllable(&a0, &b)?;
    Ok(QuadrotorModel { a0, b, params })
}

impl QuadrotorModel {
    pub fn open_loop(&self, selection: &MeasurementSelection) -> Result<LtiSystem> {
        LtiSystem::new(self.a0.clone(), self.b.clone(), selection.c())
    }

    pub fn closed_loop(
        &self,
        g: &DMatrix<f64>,
        selection: &MeasurementSelection,
    ) -> Result<LtiSystem> {
        LtiSystem::new(&self.a0 + &self.b * g, self.b.clone(), selection.c())
    }
}

/// Positions first, then any extra measured states in increasing order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementSelection {
    indices: Vec<usize>,
}

impl MeasurementSelection {
    pub fn new(extra: &[usize]) -> Result<Self> {
        let mut extra = extra.to_vec();
        extra.sort_unstable();
        extra.dedup();
        if let Some(&bad) = extra
            .iter()
            .find(|&&i| i >= N_STATES || POSITIONS.contains(&i))
        {
            return Err(Error::Config(format!(
                "extra measured state {bad} is not a non-position state index"
            )));
        }
        let indices = POSITIONS.iter().cloned().chain(extra).collect();
        Ok(Self { indices })
    }

    /// Positions plus `n_y - 3` distinct non-position states drawn uniformly.
    pub fn random(n_y: usize, rng: &mut impl Rng) -> Result<Self> {
        if !(3..=N_STATES).contains(&n_y) {
            return Err(Error::Config(format!("n_y = {n_y} outside 3..=10")));
        }
        let others: Vec<usize> = (0..N_STATES).filter(|i| !POSITIONS.contains(i)).collect();
        let picked: Vec<usize> = sample(rng, others.len(), n_y - 3)
            .iter()
            .map(|j| others[j])
            .collect();
        Self::new(&picked)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn p(&self) -> usize {
        self.indices.len()
    }

    /// Rows of the identity picking the selected states.
    pub fn c(&self) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.p(), N_STATES);
        for (row, &i) in self.indices.iter().enumerate() {
            c[(row, i)] = 1.0;
        }
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DesignKind {
    Lqr,
    PolePlacement,
}

#[derive(Clone, Debug)]
pub struct FeedbackDesign {
    pub g: DMatrix<f64>,
    pub a_cl: DMatrix<f64>,
    pub kind: DesignKind,
    pub eigenvalues: Vec<num_complex::Complex64>,
    pub requested_poles: Option<Vec<f64>>,
    pub report: CorrectabilityReport,
    /// Perturbation rounds used by [`design_secure_feedback`]; zero otherwise.
    pub tries: usize,
}

impl FeedbackDesign {
    fn assemble(
        a0: &DMatrix<f64>,
        b: &DMatrix<f64>,
        c: &DMatrix<f64>,
        g: DMatrix<f64>,
        kind: DesignKind,
        requested_poles: Option<Vec<f64>>,
    ) -> Result<Self> {
        let a_cl = a0 + b * &g;
        let sys = LtiSystem::new(a_cl.clone(), b.clone(), c.clone())?;
        let report = correctability_report(&sys, DEFAULT_SUPPORT_EPS);
        Ok(Self {
            eigenvalues: report.eigenvalues.clone(),
            g,
            a_cl,
            kind,
            requested_poles,
            report,
            tries: 0,
        })
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| l.norm())
            .fold(0.0, f64::max)
    }

    /// Every eigenvector has full measurement support.
    pub fn has_full_support(&self) -> bool {
        self.report.supports.iter().all(|&s| s == self.report.p)
    }
}

/// `Qc = diag(10 on positions, 1 elsewhere)`, `Rc = I`.
pub fn default_lqr_weights() -> (DMatrix<f64>, DMatrix<f64>) {
    let q = DMatrix::from_fn(N_STATES, N_STATES, |i, j| {
        match (i == j, POSITIONS.contains(&i)) {
            (true, true) => 10.0,
            (true, false) => 1.0,
            _ => 0.0,
        }
    });
    (q, DMatrix::identity(N_INPUTS, N_INPUTS))
}

pub fn lqr_gain(
    model: &QuadrotorModel,
    c: &DMatrix<f64>,
    qc: &DMatrix<f64>,
    rc: &DMatrix<f64>,
) -> Result<FeedbackDesign> {
    control::ensure_controllable(&model.a0, &model.b)?;
    let g = control::lqr(&model.a0, &model.b, qc, rc)?;
    FeedbackDesign::assemble(&model.a0, &model.b, c, g, DesignKind::Lqr, None)
}

/// Seed used for the null-space directions when none is given.
pub const DEFAULT_DIRECTION_SEED: u64 = 0x5eed;

pub fn place_poles(
    model: &QuadrotorModel,
    c: &DMatrix<f64>,
    poles: &[f64],
) -> Result<FeedbackDesign> {
    place_poles_seeded(&model.a0, &model.b, c, poles, DEFAULT_DIRECTION_SEED)
}

pub fn place_poles_seeded(
    a0: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    poles: &[f64],
    direction_seed: u64,
) -> Result<FeedbackDesign> {
    let g = control::place_poles(a0, b, poles, direction_seed)?;
    let mut sorted = poles.to_vec();
    sorted.sort_by(f64::total_cmp);
    FeedbackDesign::assemble(a0, b, c, g, DesignKind::PolePlacement, Some(sorted))
}

/// Ten distinct reals evenly spaced over `[0.55, 0.95]`.
pub fn default_pole_request() -> Vec<f64> {
    (0..N_STATES)
        .map(|i| 0.55 + 0.4 * i as f64 / (N_STATES - 1) as f64)
        .collect()
}

/// Distinct positive reals near the LQR closed-loop pole magnitudes: sorted
/// moduli, capped at `max_pole`, pushed apart to at least `gap`.
pub fn lqr_inspired_poles(design: &FeedbackDesign, max_pole: f64, gap: f64) -> Result<Vec<f64>> {
    let mut moduli: Vec<f64> = design.eigenvalues.iter().map(|l| l.norm()).collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    let mut poles = Vec::with_capacity(moduli.len());
    let mut ceiling = max_pole;
    for m in moduli {
        let pole = m.min(ceiling);
        poles.push(pole);
        ceiling = pole - gap;
    }
    poles.reverse();
    if poles.first().is_some_and(|&p| p <= 0.0) {
        return Err(Error::PlacementFailed {
            reason: "spaced poles left (0, 1)".into(),
            residual: 0.0,
        });
    }
    Ok(poles)
}

pub const PERTURB_START: f64 = 1e-3;
pub const PERTURB_CAP: f64 = 0.05;
pub const MIN_POLE_GAP: f64 = 1e-4;

/// Perturb `initial` by `U(-eps, eps)` per pole, then restore ordering and
/// the minimum gap while keeping every pole positive.
pub fn perturb_poles(initial: &[f64], eps: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut poles: Vec<f64> = initial
        .iter()
        .map(|&p| p + rng.random_range(-eps..=eps))
        .collect();
    poles.sort_by(f64::total_cmp);
    poles[0] = poles[0].max(MIN_POLE_GAP);
    for i in 1..poles.len() {
        if poles[i] - poles[i - 1] < MIN_POLE_GAP {
            poles[i] = poles[i - 1] + MIN_POLE_GAP;
        }
    }
    poles
}

/// Perturbation magnitude after `failures` unsuccessful tries.
pub fn perturbation_size(failures: usize) -> f64 {
    (PERTURB_START * 2f64.powi((failures / 10) as i32)).min(PERTURB_CAP)
}

/// Search for a pole placement whose closed-loop eigenvectors all have full
/// measurement support, starting from `initial_poles` and perturbing them
/// until `|supp(C v_i)| = p` for every `i`.
pub fn design_secure_feedback(
    a0: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    initial_poles: &[f64],
    max_tries: usize,
    seed: u64,
) -> Result<FeedbackDesign> {
    if initial_poles.iter().any(|&p| p <= 0.0) {
        return Err(Error::Config("initial poles must be positive".into()));
    }
    let mut sorted_initial = initial_poles.to_vec();
    sorted_initial.sort_by(f64::total_cmp);
    if sorted_initial.windows(2).any(|w| w[1] - w[0] <= 0.0) {
        return Err(Error::Config("initial poles must be distinct".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<FeedbackDesign> = None;
    for attempt in 0..=max_tries {
        let poles = if attempt == 0 {
            sorted_initial.clone()
        } else {
            perturb_poles(&sorted_initial, perturbation_size(attempt - 1), &mut rng)
        };
        let direction_seed = if attempt == 0 {
            DEFAULT_DIRECTION_SEED
        } else {
            rng.random()
        };
        let Ok(mut design) = place_poles_seeded(a0, b, c, &poles, direction_seed) else {
            continue;
        };
        design.tries = attempt;
        if design.has_full_support() {
            return Ok(design);
        }
        if best
            .as_ref()
            .is_none_or(|d| design.report.s_min > d.report.s_min)
        {
            best = Some(design);
        }
    }
    Err(Error::MaxTriesExceeded {
        tries: max_tries,
        best_s_min: best.as_ref().map_or(0, |d| d.report.s_min),
        best: best.map(Box::new),
    })
}

/// LQR design followed by the support-aware search seeded from its poles.
pub fn default_secure_design(
    model: &QuadrotorModel,
    c: &DMatrix<f64>,
    max_tries: usize,
    seed: u64,
) -> Result<FeedbackDesign> {
    let (qc, rc) = default_lqr_weights();
    let lqr = lqr_gain(model, c, &qc, &rc)?;
    let initial = lqr_inspired_poles(&lqr, 0.98, 0.01)?;
    design_secure_feedback(&model.a0, &model.b, c, &initial, max_tries, seed)
}

/// Linear interpolation of `x_r(k)` between `(step, position)` waypoints;
/// velocities are the per-step slope divided by the sample period.
pub fn reference_state(waypoints: &[(usize, [f64; 3])], k: usize, dt: f64) -> DVector<f64> {
    let mut x = DVector::zeros(N_STATES);
    let Some(first) = waypoints.first() else {
        return x;
    };
    let (pos, vel) = match waypoints.windows(2).find(|w| k >= w[0].0 && k < w[1].0) {
        Some(w) => {
            let span = (w[1].0 - w[0].0) as f64;
            let t = (k - w[0].0) as f64 / span;
            let pos: [f64; 3] = std::array::from_fn(|i| w[0].1[i] + t * (w[1].1[i] - w[0].1[i]));
            let vel: [f64; 3] = std::array::from_fn(|i| (w[1].1[i] - w[0].1[i]) / (span * dt));
            (pos, vel)
        }
        None if k < first.0 => (first.1, [0.0; 3]),
        None => (waypoints.last().expect("non-empty").1, [0.0; 3]),
    };
    for axis in 0..3 {
        x[POSITIONS[axis]] = pos[axis];
        x[POSITIONS[axis] + 1] = vel[axis];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_model_is_controllable() {
        let model = build_quadrotor(QuadrotorParams::default()).unwrap();
        assert_eq!(control::controllability_rank(&model.a0, &model.b), 10);
    }

    #[test]
    fn zero_input_hover_is_constant() {
        let model = build_quadrotor(QuadrotorParams::default()).unwrap();
        let mut x = DVector::zeros(10);
        x[0] = 1.0;
        x[4] = -2.0;
        x[8] = 3.0;
        assert_eq!(&model.a0 * &x, x);
    }

    #[test]
    fn constant_thrust_gives_quadratic_altitude() {
        let params = QuadrotorParams::default();
        let model = build_quadrotor(params).unwrap();
        let u = DVector::from_vec(vec![0.0, 0.0, 2.0]);
        let mut x = DVector::zeros(10);
        for k in 1..=20 {
            x = &model.a0 * &x + &model.b * &u;
            let t = k as f64 * params.dt;
            assert!((x[8] - 0.5 * 2.0 * t * t).abs() < 1e-12);
            assert!((x[9] - 2.0 * t).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_period_rejected() {
        let params = QuadrotorParams {
            dt: 0.0,
            ..Default::default()
        };
        assert!(build_quadrotor(params).is_err());
    }

    #[test]
    fn selection_puts_positions_first() {
        let sel = MeasurementSelection::new(&[9, 1]).unwrap();
        assert_eq!(sel.indices(), &[0, 4, 8, 1, 9]);
        assert_eq!(sel.c().nrows(), 5);
        assert!(MeasurementSelection::new(&[4]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n_y in [3, 5, 8] {
            let s = MeasurementSelection::random(n_y, &mut rng).unwrap();
            assert_eq!(s.p(), n_y);
            assert_eq!(&s.indices()[..3], &POSITIONS);
        }
    }

    #[test]
    fn perturbation_schedule() {
        assert_eq!(perturbation_size(0), 1e-3);
        assert_eq!(perturbation_size(10), 2e-3);
        assert_eq!(perturbation_size(1000), PERTURB_CAP);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base = default_pole_request();
        for _ in 0..100 {
            let p = perturb_poles(&base, 0.05, &mut rng);
            assert!(p[0] > 0.0);
            assert!(p.windows(2).all(|w| w[1] - w[0] >= MIN_POLE_GAP - 1e-15));
        }
    }

    #[test]
    fn reference_interpolates() {
        let wps = [(0, [0.0, 0.0, 0.0]), (10, [1.0, 2.0, 3.0])];
        let x = reference_state(&wps, 5, 0.1);
        assert_eq!((x[0], x[4], x[8]), (0.5, 1.0, 1.5));
        assert!((x[1] - 1.0).abs() < 1e-12);
        let end = reference_state(&wps, 50, 0.1);
        assert_eq!((end[0], end[1]), (1.0, 0.0));
    }
}
