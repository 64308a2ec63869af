//! Secure decoder: annihilate the state with `Q2^T`, recover the sparse
//! stacked attack by l1 minimization, then back out the window's initial
//! state from the first QR block row.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{seq::index::sample, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{dim, Error, Result};
use crate::l1::{self, L1Problem, SolveStatus, SolverConfig};
use crate::linalg;
use crate::lti::{self, DecoderMatrices, LtiSystem, RANK_TOL};

/// Relative entry threshold used when counting `|supp(C v_i)|`.
pub const DEFAULT_SUPPORT_EPS: f64 = 1e-8;

/// Stacked measurements `[y(0); ...; y(T-1)]` plus the inputs applied in between.
#[derive(Clone, Debug)]
pub struct MeasurementWindow {
    y: DVector<f64>,
    known_inputs: Option<Vec<DVector<f64>>>,
    window: usize,
    p: usize,
}

impl MeasurementWindow {
    pub fn new(
        y: DVector<f64>,
        window: usize,
        p: usize,
        known_inputs: Option<Vec<DVector<f64>>>,
    ) -> Result<Self> {
        if window == 0 || p == 0 || y.len() != p * window {
            return Err(dim(format!(
                "stacked window has length {}, expected {p} * {window}",
                y.len()
            )));
        }
        if let Some(u) = &known_inputs {
            if u.len() + 1 != window {
                return Err(dim(format!(
                    "{} known inputs for a window of {window}, expected {}",
                    u.len(),
                    window - 1
                )));
            }
        }
        Ok(Self {
            y,
            known_inputs,
            window,
            p,
        })
    }

    /// Stack per-step measurements `y(0..T)`.
    pub fn from_steps(
        steps: &[DVector<f64>],
        known_inputs: Option<Vec<DVector<f64>>>,
    ) -> Result<Self> {
        let p = steps.first().map_or(0, DVector::len);
        if steps.iter().any(|y| y.len() != p) {
            return Err(dim("measurements in a window must share one length"));
        }
        let y = DVector::from_iterator(
            p * steps.len(),
            steps.iter().flat_map(|s| s.iter().cloned()),
        );
        Self::new(y, steps.len(), p, known_inputs)
    }

    pub fn stacked(&self) -> &DVector<f64> {
        &self.y
    }
    pub fn known_inputs(&self) -> Option<&[DVector<f64>]> {
        self.known_inputs.as_deref()
    }
    pub fn window(&self) -> usize {
        self.window
    }
    pub fn p(&self) -> usize {
        self.p
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackEstimate {
    pub e_hat: DVector<f64>,
    pub per_step: Vec<DVector<f64>>,
    pub support: Vec<Vec<usize>>,
}

impl AttackEstimate {
    /// Split a stacked estimate into `window` slices of length `p`, with
    /// supports taken at the default threshold of the whole vector.
    pub fn from_stacked(e_hat: DVector<f64>, p: usize) -> Self {
        let eps = l1::default_support_eps(&e_hat);
        let per_step: Vec<DVector<f64>> = e_hat
            .as_slice()
            .chunks(p)
            .map(DVector::from_column_slice)
            .collect();
        let support = per_step
            .iter()
            .map(|e| l1::thresholded_support(e, Some(eps)))
            .collect();
        Self {
            e_hat,
            per_step,
            support,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DecodeResult {
    pub x0_hat: DVector<f64>,
    pub attack: AttackEstimate,
    pub status: SolveStatus,
    pub iterations: usize,
}

/// Decoder for one system and window length. Holds only immutable data, so a
/// decode never depends on any earlier decode.
#[derive(Clone, Debug)]
pub struct Decoder {
    sys: LtiSystem,
    dm: DecoderMatrices,
    /// `C A^i B` for `i = 0..T-1`.
    markov: Vec<DMatrix<f64>>,
}

impl Decoder {
    pub fn new(sys: &LtiSystem, window: usize) -> Result<Self> {
        let dm = lti::decoder_matrices(sys, window)?;
        let mut markov = Vec::with_capacity(window);
        let mut a_pow_b = sys.b().clone();
        for _ in 0..window {
            markov.push(sys.c() * &a_pow_b);
            a_pow_b = sys.a() * a_pow_b;
        }
        Ok(Self {
            sys: sys.clone(),
            dm,
            markov,
        })
    }

    pub fn system(&self) -> &LtiSystem {
        &self.sys
    }
    pub fn matrices(&self) -> &DecoderMatrices {
        &self.dm
    }
    pub fn window(&self) -> usize {
        self.dm.window
    }

    /// Stacked `sum_{j<k} C A^{k-1-j} B u(j)` for `k = 0..T`.
    pub fn forced_response(&self, inputs: &[DVector<f64>]) -> Result<DVector<f64>> {
        let (p, window) = (self.sys.p(), self.window());
        if inputs.len() + 1 != window {
            return Err(dim(format!(
                "{} inputs for a window of {window}",
                inputs.len()
            )));
        }
        if let Some(j) = inputs.iter().position(|u| u.len() != self.sys.m()) {
            return Err(dim(format!(
                "input {j} has length {}, expected {}",
                inputs[j].len(),
                self.sys.m()
            )));
        }
        let mut out = DVector::zeros(p * window);
        for k in 1..window {
            let mut yk = DVector::zeros(p);
            for (j, u) in inputs.iter().enumerate().take(k) {
                yk += &self.markov[k - 1 - j] * u;
            }
            out.rows_mut(k * p, p).copy_from(&yk);
        }
        Ok(out)
    }

    fn autonomous_part(&self, w: &MeasurementWindow) -> Result<DVector<f64>> {
        if w.p() != self.sys.p() || w.window() != self.window() {
            return Err(dim(format!(
                "window is {}x{}, decoder expects {}x{}",
                w.window(),
                w.p(),
                self.window(),
                self.sys.p()
            )));
        }
        match w.known_inputs() {
            Some(u) => Ok(w.stacked() - self.forced_response(u)?),
            None => Ok(w.stacked().clone()),
        }
    }

    /// `Q2^T (Y - forced response)`.
    pub fn residual_projection(&self, w: &MeasurementWindow) -> Result<DVector<f64>> {
        Ok(residual_projection(&self.dm, &self.autonomous_part(w)?))
    }

    pub fn decode(&self, w: &MeasurementWindow, config: &SolverConfig) -> Result<DecodeResult> {
        let y = self.autonomous_part(w)?;
        let residual = residual_projection(&self.dm, &y);
        let (e_hat, status, iterations) = if residual.is_empty() {
            (DVector::zeros(y.len()), SolveStatus::Optimal, 0)
        } else {
            let prob = L1Problem::with_config(self.dm.q2.transpose(), residual, *config)?;
            let sol = l1::solve_l1_equality(&prob);
            (sol.e_hat, sol.status, sol.iterations)
        };
        let (x0_hat, e_hat) = match self.refine(&y, &e_hat) {
            Some(refined) => refined,
            None => (self.dm.solve_state(&(&y - &e_hat)), e_hat),
        };
        Ok(DecodeResult {
            x0_hat,
            attack: AttackEstimate::from_stacked(e_hat, self.sys.p()),
            status,
            iterations,
        })
    }

    /// Re-fit the state on the measurements the attack estimate leaves clean.
    ///
    /// When those rows are strictly overdetermined and fit exactly, the
    /// least-squares state is free of the rounding error that huge attack
    /// values leave in `Y - E_hat`, and the attack is re-read as the misfit
    /// on the flagged rows. Otherwise (noise, wrong support) `None`.
    fn refine(
        &self,
        y: &DVector<f64>,
        e_hat: &DVector<f64>,
    ) -> Option<(DVector<f64>, DVector<f64>)> {
        let n = self.dm.n();
        let attacked = l1::thresholded_support(e_hat, None);
        let clean: Vec<usize> = (0..y.len())
            .filter(|i| attacked.binary_search(i).is_err())
            .collect();
        if clean.len() <= n {
            return None;
        }
        let phi_c = self.dm.phi.select_rows(&clean);
        let z_c = y.select_rows(&clean);
        let svd = phi_c.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if svd.singular_values.min() <= RANK_TOL * smax {
            return None;
        }
        let x = svd.solve(&z_c, 0.0).ok()?;
        if (&phi_c * &x - &z_c).norm() > REFINE_TOL * (1.0 + z_c.norm()) {
            return None;
        }
        let mut e = y - &self.dm.phi * &x;
        for &i in &clean {
            e[i] = 0.0;
        }
        Some((x, e))
    }
}

/// Relative misfit below which the clean rows count as exactly consistent.
const REFINE_TOL: f64 = 1e-9;

/// `Q2^T Y` for an already input-corrected stacked window.
pub fn residual_projection(dm: &DecoderMatrices, y: &DVector<f64>) -> DVector<f64> {
    dm.q2.tr_mul(y)
}

/// `x(k) = A^k x0 + sum_{j<k} A^{k-1-j} B u(j)`.
pub fn propagate_state(
    sys: &LtiSystem,
    x0_hat: &DVector<f64>,
    k: usize,
    inputs: &[DVector<f64>],
) -> Result<DVector<f64>> {
    if inputs.len() < k && sys.m() > 0 {
        return Err(dim(format!(
            "{} inputs cannot propagate {k} steps",
            inputs.len()
        )));
    }
    let mut x = x0_hat.clone();
    for j in 0..k {
        x = sys.a() * x;
        if let (true, Some(u)) = (sys.m() > 0, inputs.get(j)) {
            x += sys.b() * u;
        }
    }
    Ok(x)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectabilityConditions {
    pub distinct_real_positive_eigenvalues: bool,
    pub c_full_rank: bool,
    pub observable: bool,
}

impl CorrectabilityConditions {
    pub fn all(&self) -> bool {
        self.distinct_real_positive_eigenvalues && self.c_full_rank && self.observable
    }
}

#[derive(Clone, Debug)]
pub struct CorrectabilityReport {
    pub eigenvalues: Vec<Complex64>,
    pub eigenvectors: Vec<DVector<Complex64>>,
    pub supports: Vec<usize>,
    pub s_min: usize,
    pub q_max: usize,
    pub p: usize,
    pub n: usize,
    /// Certified window for `q_max`, if one exists.
    pub t_star: Option<usize>,
    pub conditions: CorrectabilityConditions,
}

impl CorrectabilityReport {
    /// The support counts only certify `q_max` when every hypothesis holds.
    pub fn is_advisory(&self) -> bool {
        !self.conditions.all()
    }

    pub fn min_window_length(&self, q: usize) -> Result<usize> {
        min_window_length(&self.supports, q, self.p, self.n)
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            eigenvalues: self.eigenvalues.iter().map(|l| [l.re, l.im]).collect(),
            supports: self.supports.clone(),
            s_min: self.s_min,
            q_max: self.q_max,
            p: self.p,
            n: self.n,
            t_star: self.t_star,
            conditions: self.conditions,
            advisory: self.is_advisory(),
        }
    }
}

/// Serializable view of a [`CorrectabilityReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub eigenvalues: Vec<[f64; 2]>,
    pub supports: Vec<usize>,
    pub s_min: usize,
    pub q_max: usize,
    pub p: usize,
    pub n: usize,
    pub t_star: Option<usize>,
    pub conditions: CorrectabilityConditions,
    pub advisory: bool,
}

/// Largest `q` with `s_min > 2q`.
pub fn q_max_from_support(s_min: usize) -> usize {
    s_min.saturating_sub(1) / 2
}

pub fn correctability_report(sys: &LtiSystem, eps: f64) -> CorrectabilityReport {
    let (a, c) = (sys.a(), sys.c());
    let c_complex = c.map(|x| Complex64::new(x, 0.0));
    let eigenvalues = linalg::sorted_eigenvalues(a);
    let eigenvectors: Vec<DVector<Complex64>> = eigenvalues
        .iter()
        .map(|&l| linalg::eigenvector(a, l))
        .collect();
    let supports: Vec<usize> = eigenvectors
        .iter()
        .map(|v| {
            let cv = &c_complex * v;
            let peak = cv.iter().map(|z| z.norm()).fold(0.0, f64::max);
            cv.iter().filter(|z| z.norm() > eps * peak).count()
        })
        .collect();
    let s_min = supports.iter().cloned().min().unwrap_or(0);
    let q_max = q_max_from_support(s_min);

    let scale = eigenvalues.iter().map(|l| l.norm()).fold(1.0, f64::max);
    let real_positive = eigenvalues
        .iter()
        .all(|l| l.im.abs() <= 1e-9 * scale && l.re > 0.0);
    let distinct = eigenvalues.iter().enumerate().all(|(i, li)| {
        eigenvalues[i + 1..]
            .iter()
            .all(|lj| (li - lj).norm() > 1e-8 * scale)
    });
    let conditions = CorrectabilityConditions {
        distinct_real_positive_eigenvalues: real_positive && distinct,
        c_full_rank: linalg::rank(c, 1e-12) == sys.p(),
        observable: sys.is_observable(),
    };
    let t_star = min_window_length(&supports, q_max, sys.p(), sys.n()).ok();
    CorrectabilityReport {
        eigenvalues,
        eigenvectors,
        supports,
        s_min,
        q_max,
        p: sys.p(),
        n: sys.n(),
        t_star,
        conditions,
    }
}

/// Smallest window certifying `q` errors from the eigenvector supports.
///
/// For each subset size `m` the ratio `((m-2) p + min S_m) / (max S_m - 2q)`
/// grows with the subset minimum and shrinks with its maximum, so over the
/// sorted supports only runs of `m` consecutive entries need checking.
pub fn min_window_length(supports: &[usize], q: usize, p: usize, n: usize) -> Result<usize> {
    if supports.len() != n {
        return Err(dim(format!("{} supports for n = {n}", supports.len())));
    }
    let s_min = supports.iter().cloned().min().unwrap_or(0);
    if s_min <= 2 * q {
        return Err(Error::NotCorrectable {
            q,
            reason: format!("s_min = {s_min} <= 2q = {}", 2 * q),
        });
    }
    let mut sorted = supports.to_vec();
    sorted.sort_unstable();
    let mut t_star = n;
    for m in 2..=n {
        // Best ratio num/den over consecutive runs, compared exactly.
        let mut best: Option<(u64, u64)> = None;
        for start in 0..=n - m {
            let num = ((m - 2) * p + sorted[start]) as u64;
            let den = (sorted[start + m - 1] - 2 * q) as u64;
            best = match best {
                Some((bn, bd)) if bn * den >= num * bd => Some((bn, bd)),
                _ => Some((num, den)),
            };
        }
        if let Some((num, den)) = best {
            t_star = t_star.max((num / den) as usize + 1);
        }
    }
    Ok(t_star)
}

/// How attack supports are laid out over a trial window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackPattern {
    /// Exactly `q` freshly drawn sensors at every step.
    PerStep { q: usize },
    /// `2q` sensors at step 0, none at step 1, and the remaining budget of
    /// `q T - 2q` spread over the other steps (at most `p` per step).
    Budget { q: usize },
}

impl AttackPattern {
    pub fn q(&self) -> usize {
        match *self {
            AttackPattern::PerStep { q } | AttackPattern::Budget { q } => q,
        }
    }

    fn counts(&self, window: usize, p: usize) -> Vec<usize> {
        match *self {
            AttackPattern::PerStep { q } => vec![q.min(p); window],
            AttackPattern::Budget { q } => {
                let mut counts = vec![0; window];
                counts[0] = (2 * q).min(p);
                let mut remaining = (q * window).saturating_sub(counts[0]);
                let mut k = 2;
                while remaining > 0 && window > 2 {
                    if counts[k] < p {
                        counts[k] += 1;
                        remaining -= 1;
                    } else if (2..window).all(|j| counts[j] >= p) {
                        break;
                    }
                    k = if k + 1 >= window { 2 } else { k + 1 };
                }
                counts
            }
        }
    }
}

/// One Monte-Carlo draw: initial state, stacked attack and stacked measurements.
#[derive(Clone, Debug)]
pub struct TrialInstance {
    pub x0: DVector<f64>,
    pub attack: DVector<f64>,
    pub y: DVector<f64>,
}

/// Random attack magnitudes mixing small and very large values: a signed
/// normal draw scaled by `10^u` with `u` uniform on `[-1, 3]`.
pub fn draw_trial(
    phi: &DMatrix<f64>,
    p: usize,
    pattern: AttackPattern,
    magnitude_scale: f64,
    rng: &mut impl Rng,
) -> TrialInstance {
    let (rows, n) = phi.shape();
    let window = rows / p;
    let x0 = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut attack = DVector::zeros(rows);
    for (k, &count) in pattern.counts(window, p).iter().enumerate() {
        for idx in sample(rng, p, count).iter() {
            let decade: f64 = rng.random_range(-1.0..3.0);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let base: f64 = rng.sample::<f64, _>(StandardNormal).abs() + 0.1;
            attack[k * p + idx] = sign * base * 10f64.powf(decade) * magnitude_scale;
        }
    }
    let y = phi * &x0 + &attack;
    TrialInstance { x0, attack, y }
}

/// State-error criterion for an exact decode.
pub fn is_exact(x0_hat: &DVector<f64>, x0: &DVector<f64>) -> bool {
    (x0_hat - x0).norm() <= 1e-6 * (1.0 + x0.norm())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrialSummary {
    pub trials: usize,
    pub exact: usize,
    pub solver_failures: usize,
}

impl TrialSummary {
    pub fn rate(&self) -> f64 {
        if self.trials == 0 {
            1.0
        } else {
            self.exact as f64 / self.trials as f64
        }
    }
}

/// Monte-Carlo recovery rate for a given attack pattern and magnitude scale.
pub fn recovery_trials(
    sys: &LtiSystem,
    window: usize,
    pattern: AttackPattern,
    trials: usize,
    seed: u64,
    magnitude_scale: f64,
) -> Result<TrialSummary> {
    let decoder = Decoder::new(sys, window)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = SolverConfig::default();
    let mut summary = TrialSummary {
        trials,
        ..Default::default()
    };
    for _ in 0..trials {
        let trial = draw_trial(
            &decoder.matrices().phi,
            sys.p(),
            pattern,
            magnitude_scale,
            &mut rng,
        );
        let w = MeasurementWindow::new(trial.y.clone(), window, sys.p(), None)?;
        let result = decoder.decode(&w, &config)?;
        if result.status != SolveStatus::Optimal {
            summary.solver_failures += 1;
        }
        if is_exact(&result.x0_hat, &trial.x0) {
            summary.exact += 1;
        }
    }
    Ok(summary)
}

/// Empirical fraction of exact decodes with at most `q` attacked sensors per step.
pub fn check_q_correctable(
    sys: &LtiSystem,
    q: usize,
    window: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    Ok(recovery_trials(sys, window, AttackPattern::PerStep { q }, trials, seed, 1.0)?.rate())
}
