//! Closed-loop quadrotor experiments: plant, controller, attack, noise and
//! the estimator modes wired together, plus the file outputs of a run.
//!
//! Two scenarios are supported. Under `mitm` the vehicle flies on true-state
//! feedback and the estimators only watch the corrupted telemetry, so every
//! mode sees one shared trajectory. Under `gps` the controller feeds back the
//! estimate, so each mode flies its own plant; all of them draw the same
//! noise and attack sequences.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::attacks::{AttackGenerator, AttackKind, AttackModel};
use crate::decoder::ReportSummary;
use crate::error::{Error, Result};
use crate::fusion::{state_rmse, DecoderEvent, EstimatorMode, FusionConfig, FusionEstimator};
use crate::kalman::KalmanState;
use crate::lti::{rows_of, LtiSystem};
use crate::quadrotor::{
    self, build_quadrotor, default_lqr_weights, default_pole_request, lqr_gain, lqr_inspired_poles,
    DesignKind, FeedbackDesign, MeasurementSelection, QuadrotorModel, QuadrotorParams, N_STATES,
    POSITIONS, STATE_NAMES,
};

/// Smallest measurement-noise variance handed to the Kalman filter.
const MIN_NOISE_VAR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Mitm,
    Gps,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementConfig {
    /// Number of measured states, positions included.
    pub n_y: usize,
    /// Non-position states to measure; drawn at random when absent.
    pub extra: Option<Vec<usize>>,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            n_y: 5,
            extra: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    /// Pole placement perturbed until every eigenvector has full support.
    Secure,
    Lqr,
    /// Plain pole placement at the requested poles.
    Poles,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    /// Pole request. `secure` defaults to poles derived from the LQR design,
    /// `poles` to ten values evenly spaced over `[0.55, 0.95]`.
    pub poles: Option<Vec<f64>>,
    pub max_tries: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            kind: ControllerKind::Secure,
            poles: None,
            max_tries: 1000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub step: usize,
    pub position: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub noise: u64,
    pub selection: u64,
    pub design: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self {
            noise: 1,
            selection: 2,
            design: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub plant: QuadrotorParams,
    pub measurements: MeasurementConfig,
    pub controller: ControllerConfig,
    pub attack: AttackModel,
    /// Standard deviation of the white measurement noise.
    pub noise_std: f64,
    /// Kalman process-noise variance per state.
    pub process_var: f64,
    /// Kalman initial covariance, a multiple of the identity.
    pub initial_var: f64,
    /// Attack estimates at or below this are ignored; defaults to `3 * noise_std`.
    pub attack_floor: Option<f64>,
    pub modes: Vec<EstimatorMode>,
    pub window: usize,
    pub horizon: usize,
    pub waypoints: Vec<Waypoint>,
    pub seeds: SeedConfig,
    pub out_dir: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::Mitm,
            plant: QuadrotorParams::default(),
            measurements: MeasurementConfig::default(),
            controller: ControllerConfig::default(),
            attack: AttackModel::mitm(0),
            noise_std: 0.01,
            process_var: 1e-6,
            initial_var: 1.0,
            attack_floor: None,
            modes: EstimatorMode::ALL.to_vec(),
            window: 10,
            horizon: 200,
            waypoints: vec![
                Waypoint {
                    step: 0,
                    position: [0.0, 0.0, 0.0],
                },
                Waypoint {
                    step: 60,
                    position: [4.0, 2.0, 3.0],
                },
                Waypoint {
                    step: 140,
                    position: [8.0, 6.0, 3.0],
                },
                Waypoint {
                    step: 200,
                    position: [10.0, 10.0, 0.0],
                },
            ],
            seeds: SeedConfig::default(),
            out_dir: None,
        }
    }
}

impl ScenarioConfig {
    pub fn mitm() -> Self {
        Self::default()
    }

    pub fn gps() -> Self {
        Self {
            scenario: ScenarioKind::Gps,
            attack: AttackModel::gps(0),
            ..Self::default()
        }
    }

    /// Derive every random stream from one seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = SeedConfig {
            noise: seed,
            selection: seed.wrapping_add(1),
            design: seed.wrapping_add(2),
        };
        self.attack.seed = seed.wrapping_add(3);
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config = Self::parse(text).map_err(Error::Config)?;
        config.validate()?;
        Ok(config)
    }

    /// Deserialize; an omitted `attack.kind` follows the scenario.
    fn parse(text: &str) -> std::result::Result<Self, String> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e: toml::de::Error| e.to_string())?;
        let kind_given = table
            .get("attack")
            .and_then(toml::Value::as_table)
            .is_some_and(|t| t.contains_key("kind"));
        let mut config: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| e.to_string())?;
        if !kind_given {
            config.attack.kind = match config.scenario {
                ScenarioKind::Mitm => AttackKind::MitmRamp,
                ScenarioKind::Gps => AttackKind::GpsSinusoid,
            };
        }
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config = Self::parse(&text).map_err(|message| Error::Parse {
            path: path.display().to_string(),
            message,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn attack_floor(&self) -> f64 {
        self.attack_floor.unwrap_or(3.0 * self.noise_std)
    }

    pub fn validate(&self) -> Result<()> {
        let n_y = self.measurements.n_y;
        if !(3..=N_STATES).contains(&n_y) {
            return Err(Error::Config(format!(
                "n_y = {n_y} must lie in 3..={N_STATES}"
            )));
        }
        if let Some(extra) = &self.measurements.extra {
            if extra.len() + 3 != n_y {
                return Err(Error::Config(format!(
                    "{} extra states given for n_y = {n_y}",
                    extra.len()
                )));
            }
            MeasurementSelection::new(extra)?;
        }
        if self.window < 2 {
            return Err(Error::Config(format!(
                "window T = {} must be at least 2",
                self.window
            )));
        }
        if self.horizon <= self.window {
            return Err(Error::Config(format!(
                "horizon K = {} must exceed the window T = {}",
                self.horizon, self.window
            )));
        }
        for (name, value) in [
            ("noise_std", self.noise_std),
            ("process_var", self.process_var),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be finite and nonnegative"
                )));
            }
        }
        if !(self.initial_var > 0.0 && self.initial_var.is_finite()) {
            return Err(Error::Config("initial_var must be positive".into()));
        }
        if self.attack_floor.is_some_and(|f| f.is_nan() || f < 0.0) {
            return Err(Error::Config("attack_floor must be nonnegative".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::Config(
                "at least one estimator mode is required".into(),
            ));
        }
        if (1..self.modes.len()).any(|i| self.modes[..i].contains(&self.modes[i])) {
            return Err(Error::Config("estimator modes must not repeat".into()));
        }
        if self.waypoints.is_empty() || self.waypoints.windows(2).any(|w| w[1].step <= w[0].step) {
            return Err(Error::Config(
                "waypoints must be non-empty with strictly increasing steps".into(),
            ));
        }
        let expected = match self.scenario {
            ScenarioKind::Mitm => AttackKind::MitmRamp,
            ScenarioKind::Gps => AttackKind::GpsSinusoid,
        };
        if self.attack.kind != AttackKind::None && self.attack.kind != expected {
            return Err(Error::Config(format!(
                "attack kind {:?} does not fit the {:?} scenario",
                self.attack.kind, self.scenario
            )));
        }
        self.attack.validate(n_y)
    }

    fn waypoint_list(&self) -> Vec<(usize, [f64; 3])> {
        self.waypoints
            .iter()
            .map(|w| (w.step, w.position))
            .collect()
    }
}

/// Plant, measurement selection and feedback design described by a config.
#[derive(Clone, Debug)]
pub struct ControllerSetup {
    pub model: QuadrotorModel,
    pub selection: MeasurementSelection,
    pub design: FeedbackDesign,
}

pub fn design_controller(config: &ScenarioConfig) -> Result<ControllerSetup> {
    let model = build_quadrotor(config.plant)?;
    let selection = match &config.measurements.extra {
        Some(extra) => MeasurementSelection::new(extra)?,
        None => MeasurementSelection::random(
            config.measurements.n_y,
            &mut ChaCha8Rng::seed_from_u64(config.seeds.selection),
        )?,
    };
    let c = selection.c();
    let request = &config.controller.poles;
    let design = match config.controller.kind {
        ControllerKind::Lqr => {
            let (qc, rc) = default_lqr_weights();
            lqr_gain(&model, &c, &qc, &rc)?
        }
        ControllerKind::Poles => quadrotor::place_poles(
            &model,
            &c,
            request.as_deref().unwrap_or(&default_pole_request()),
        )?,
        ControllerKind::Secure => {
            let initial = match request {
                Some(poles) => poles.clone(),
                None => {
                    let (qc, rc) = default_lqr_weights();
                    lqr_inspired_poles(&lqr_gain(&model, &c, &qc, &rc)?, 0.98, 0.01)?
                }
            };
            quadrotor::design_secure_feedback(
                &model.a0,
                &model.b,
                &c,
                &initial,
                config.controller.max_tries,
                config.seeds.design,
            )?
        }
    };
    Ok(ControllerSetup {
        model,
        selection,
        design,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub kind: DesignKind,
    pub gain: Vec<Vec<f64>>,
    pub eigenvalues: Vec<[f64; 2]>,
    pub requested_poles: Option<Vec<f64>>,
    pub spectral_radius: f64,
    pub tries: usize,
}

impl DesignSummary {
    pub fn new(design: &FeedbackDesign) -> Self {
        Self {
            kind: design.kind,
            gain: rows_of(&design.g),
            eigenvalues: design.eigenvalues.iter().map(|l| [l.re, l.im]).collect(),
            requested_poles: design.requested_poles.clone(),
            spectral_radius: design.spectral_radius(),
            tries: design.tries,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeMetrics {
    pub mode: EstimatorMode,
    /// `sqrt(mean_k ||x_hat(k) - x(k)||^2)` over the horizon.
    pub state_rmse: f64,
    /// Mean Euclidean distance between the flown and the desired position.
    pub path_error: f64,
    /// Steps at which the decoder did not return an optimal solution.
    pub decoder_failures: usize,
    pub decoded_steps: usize,
}

/// Everything one estimator mode produced over the horizon.
#[derive(Clone, Debug)]
pub struct ModeRun {
    pub mode: EstimatorMode,
    /// True plant state at each step (shared by all modes under MITM).
    pub states: Vec<DVector<f64>>,
    pub x_hat: Vec<DVector<f64>>,
    pub e_hat: Vec<DVector<f64>>,
    pub decoded: Vec<bool>,
    pub events: Vec<DecoderEvent>,
    pub metrics: ModeMetrics,
}

impl ModeRun {
    /// Signed `e_hat(k) - e(k)`, one column per step.
    pub fn attack_error(&self, attacks: &[DVector<f64>]) -> DMatrix<f64> {
        let p = attacks.first().map_or(0, DVector::len);
        let mut grid = DMatrix::zeros(p, self.e_hat.len());
        for (k, (eh, e)) in self.e_hat.iter().zip(attacks).enumerate() {
            grid.set_column(k, &(eh - e));
        }
        grid
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub selection: Vec<usize>,
    pub design: DesignSummary,
    pub correctability: ReportSummary,
    pub reference: Vec<DVector<f64>>,
    pub attacks: Vec<DVector<f64>>,
    pub runs: Vec<ModeRun>,
}

impl RunReport {
    pub fn mode(&self, mode: EstimatorMode) -> Option<&ModeRun> {
        self.runs.iter().find(|r| r.mode == mode)
    }

    pub fn metrics(&self, mode: EstimatorMode) -> Option<&ModeMetrics> {
        self.mode(mode).map(|r| &r.metrics)
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            scenario: self.config.scenario,
            horizon: self.config.horizon,
            window: self.config.window,
            noise_std: self.config.noise_std,
            attack_floor: self.config.attack_floor(),
            seeds: self.config.seeds,
            attack_seed: self.config.attack.seed,
            selection: self.selection.clone(),
            design: self.design.clone(),
            correctability: self.correctability.clone(),
            metrics: self.runs.iter().map(|r| r.metrics.clone()).collect(),
            decoder_events: self
                .runs
                .iter()
                .map(|r| (r.mode, r.events.clone()))
                .collect(),
        }
    }
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: ScenarioKind,
    pub horizon: usize,
    pub window: usize,
    pub noise_std: f64,
    pub attack_floor: f64,
    pub seeds: SeedConfig,
    pub attack_seed: u64,
    pub selection: Vec<usize>,
    pub design: DesignSummary,
    pub correctability: ReportSummary,
    pub metrics: Vec<ModeMetrics>,
    pub decoder_events: Vec<(EstimatorMode, Vec<DecoderEvent>)>,
}

fn position(x: &DVector<f64>) -> [f64; 3] {
    POSITIONS.map(|i| x[i])
}

fn path_error(states: &[DVector<f64>], reference: &[DVector<f64>]) -> f64 {
    if states.is_empty() {
        return 0.0;
    }
    let total: f64 = states
        .iter()
        .zip(reference)
        .map(|(x, r)| {
            let (a, b) = (position(x), position(r));
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
        })
        .sum();
    total / states.len() as f64
}

struct Inputs<'a> {
    config: &'a ScenarioConfig,
    setup: &'a ControllerSetup,
    reference: &'a [DVector<f64>],
    noise: &'a [DVector<f64>],
    attacks: &'a [DVector<f64>],
}

impl Inputs<'_> {
    fn estimator(&self, sys: &LtiSystem, mode: EstimatorMode) -> Result<FusionEstimator> {
        let n = sys.n();
        let kf = KalmanState::new(
            self.reference[0].clone(),
            DMatrix::identity(n, n) * self.config.initial_var,
            DMatrix::identity(n, n) * self.config.process_var,
            DMatrix::identity(sys.p(), sys.p()) * self.config.noise_std.powi(2).max(MIN_NOISE_VAR),
        )?;
        let fusion = FusionConfig {
            attack_floor: self.config.attack_floor(),
            ..FusionConfig::default()
        };
        FusionEstimator::new(sys, self.config.window, mode, kf, fusion)
    }

    fn measure(&self, c: &DMatrix<f64>, x: &DVector<f64>, k: usize) -> DVector<f64> {
        c * x + &self.noise[k] + &self.attacks[k]
    }

    fn finish(
        &self,
        mode: EstimatorMode,
        est: &FusionEstimator,
        states: Vec<DVector<f64>>,
        outputs: Outputs,
    ) -> ModeRun {
        let metrics = ModeMetrics {
            mode,
            state_rmse: state_rmse(&outputs.x_hat, &states),
            path_error: path_error(&states, self.reference),
            decoder_failures: est.events().len(),
            decoded_steps: outputs.decoded.iter().filter(|&&d| d).count(),
        };
        ModeRun {
            mode,
            states,
            x_hat: outputs.x_hat,
            e_hat: outputs.e_hat,
            decoded: outputs.decoded,
            events: est.events().to_vec(),
            metrics,
        }
    }

    /// True-state feedback; the estimators watch the closed loop with the
    /// reference term as a known input.
    fn run_mitm(&self) -> Result<Vec<ModeRun>> {
        let ControllerSetup {
            model,
            selection,
            design,
        } = self.setup;
        let c = selection.c();
        let sys = LtiSystem::new(design.a_cl.clone(), model.b.clone(), c.clone())?;
        let known: Vec<DVector<f64>> = self.reference.iter().map(|r| -(&design.g * r)).collect();
        let mut states = Vec::with_capacity(self.config.horizon);
        let mut x = self.reference[0].clone();
        for u in known.iter().take(self.config.horizon) {
            states.push(x.clone());
            x = &design.a_cl * &x + &model.b * u;
        }
        let measurements: Vec<_> = states
            .iter()
            .enumerate()
            .map(|(k, x)| self.measure(&c, x, k))
            .collect();
        self.config
            .modes
            .iter()
            .map(|&mode| {
                let mut est = self.estimator(&sys, mode)?;
                let mut out = Outputs::default();
                for (k, (y, u)) in measurements.iter().zip(&known).enumerate() {
                    out.push(est.step(k, y, u)?);
                }
                Ok(self.finish(mode, &est, states.clone(), out))
            })
            .collect()
    }

    /// Delayed estimate feedback `u(k) = G (x_hat(k-1) - x_r(k))` with
    /// `x_hat(-1) = x_r(0)`; every mode flies its own plant.
    fn run_gps(&self) -> Result<Vec<ModeRun>> {
        let ControllerSetup {
            model,
            selection,
            design,
        } = self.setup;
        let c = selection.c();
        let sys = LtiSystem::new(model.a0.clone(), model.b.clone(), c.clone())?;
        self.config
            .modes
            .iter()
            .map(|&mode| {
                let mut est = self.estimator(&sys, mode)?;
                let mut out = Outputs::default();
                let mut states = Vec::with_capacity(self.config.horizon);
                let mut x = self.reference[0].clone();
                let mut prev = self.reference[0].clone();
                for k in 0..self.config.horizon {
                    let step = est.observe(k, &self.measure(&c, &x, k))?;
                    let u = &design.g * (&prev - &self.reference[k]);
                    est.apply_input(&u)?;
                    prev.copy_from(&step.x_hat);
                    out.push(step);
                    states.push(x.clone());
                    x = &model.a0 * &x + &model.b * &u;
                }
                Ok(self.finish(mode, &est, states, out))
            })
            .collect()
    }
}

#[derive(Default)]
struct Outputs {
    x_hat: Vec<DVector<f64>>,
    e_hat: Vec<DVector<f64>>,
    decoded: Vec<bool>,
}

impl Outputs {
    fn push(&mut self, step: crate::fusion::StepOutput) {
        self.x_hat.push(step.x_hat);
        self.e_hat.push(step.e_hat);
        self.decoded.push(step.decoded);
    }
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport> {
    config.validate()?;
    let setup = design_controller(config)?;
    let p = setup.selection.p();
    let horizon = config.horizon;
    let waypoints = config.waypoint_list();
    let reference: Vec<_> = (0..horizon)
        .map(|k| quadrotor::reference_state(&waypoints, k, config.plant.dt))
        .collect();

    let normal = Normal::new(0.0, config.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seeds.noise);
    let noise: Vec<_> = (0..horizon)
        .map(|_| DVector::from_fn(p, |_, _| normal.sample(&mut noise_rng)))
        .collect();
    let attacks = AttackGenerator::new(config.attack, p)?.sequence(horizon);

    let inputs = Inputs {
        config,
        setup: &setup,
        reference: &reference,
        noise: &noise,
        attacks: &attacks,
    };
    let runs = match config.scenario {
        ScenarioKind::Mitm => inputs.run_mitm()?,
        ScenarioKind::Gps => inputs.run_gps()?,
    };
    Ok(RunReport {
        config: config.clone(),
        selection: setup.selection.indices().to_vec(),
        design: DesignSummary::new(&setup.design),
        correctability: setup.design.report.summary(),
        reference,
        attacks,
        runs,
    })
}

/// Run the same scenario for several measurement counts, one thread per run.
pub fn run_sweep(config: &ScenarioConfig, n_ys: &[usize]) -> Result<Vec<RunReport>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = n_ys
            .iter()
            .map(|&n_y| {
                let mut cfg = config.clone();
                cfg.measurements = MeasurementConfig { n_y, extra: None };
                scope.spawn(move || run_scenario(&cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect()
    })
}

pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn attack_error_file(mode: EstimatorMode) -> String {
    format!("attack_error_{mode}.csv")
}

/// Header of the time-series table for `p` sensors and the given modes.
pub fn timeseries_header(p: usize, modes: &[EstimatorMode]) -> Vec<String> {
    let mut header = vec!["k".to_string()];
    header.extend(["ref_px", "ref_py", "ref_pz"].map(String::from));
    header.extend((0..p).map(|j| format!("e_{j}")));
    for mode in modes {
        header.extend(STATE_NAMES.iter().map(|s| format!("{mode}_x_{s}")));
        header.extend(STATE_NAMES.iter().map(|s| format!("{mode}_xhat_{s}")));
        header.extend((0..p).map(|j| format!("{mode}_ehat_{j}")));
    }
    header
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputFiles {
    pub timeseries: PathBuf,
    pub summary: PathBuf,
    pub attack_errors: Vec<PathBuf>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Write the time-series table, the JSON summary and one attack-error grid
/// per mode into `dir`. Floats use the shortest representation that reads
/// back to the same value.
pub fn emit_outputs(report: &RunReport, dir: impl AsRef<Path>) -> Result<OutputFiles> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let p = report.selection.len();
    let modes: Vec<_> = report.runs.iter().map(|r| r.mode).collect();

    let timeseries = dir.join(TIMESERIES_FILE);
    let mut writer = csv::Writer::from_path(&timeseries).map_err(csv_err(&timeseries))?;
    writer
        .write_record(timeseries_header(p, &modes))
        .map_err(csv_err(&timeseries))?;
    for k in 0..report.attacks.len() {
        let mut row = vec![k.to_string()];
        row.extend(position(&report.reference[k]).iter().map(f64::to_string));
        row.extend(report.attacks[k].iter().map(f64::to_string));
        for run in &report.runs {
            row.extend(run.states[k].iter().map(f64::to_string));
            row.extend(run.x_hat[k].iter().map(f64::to_string));
            row.extend(run.e_hat[k].iter().map(f64::to_string));
        }
        writer.write_record(&row).map_err(csv_err(&timeseries))?;
    }
    writer.flush().map_err(io_err(&timeseries))?;

    let summary = dir.join(SUMMARY_FILE);
    let json = serde_json::to_string_pretty(&report.summary()).map_err(|e| Error::Parse {
        path: summary.display().to_string(),
        message: e.to_string(),
    })?;
    fs::write(&summary, json + "\n").map_err(io_err(&summary))?;

    let mut attack_errors = Vec::new();
    for run in &report.runs {
        let path = dir.join(attack_error_file(run.mode));
        let grid = run.attack_error(&report.attacks);
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(&path)
            .map_err(csv_err(&path))?;
        for row in grid.row_iter() {
            writer
                .write_record(row.iter().map(f64::to_string))
                .map_err(csv_err(&path))?;
        }
        writer.flush().map_err(io_err(&path))?;
        attack_errors.push(path);
    }
    Ok(OutputFiles {
        timeseries,
        summary,
        attack_errors,
    })
}

/// Recompute a mode's state RMSE from a written time-series table.
pub fn rmse_from_table(path: impl AsRef<Path>, mode: EstimatorMode) -> Result<f64> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = reader.headers().map_err(csv_err(path))?.clone();
    let column = |name: String| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                message: format!("missing column {name}"),
            })
    };
    let truth_cols: Vec<usize> = STATE_NAMES
        .iter()
        .map(|s| column(format!("{mode}_x_{s}")))
        .collect::<Result<_>>()?;
    let est_cols: Vec<usize> = STATE_NAMES
        .iter()
        .map(|s| column(format!("{mode}_xhat_{s}")))
        .collect::<Result<_>>()?;
    let (mut truth, mut estimates) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(csv_err(path))?;
        let parse = |cols: &[usize]| -> Result<DVector<f64>> {
            let values: Vec<f64> = cols
                .iter()
                .map(|&i| {
                    record[i].parse::<f64>().map_err(|e| Error::Parse {
                        path: path.display().to_string(),
                        message: format!("column {i}: {e}"),
                    })
                })
                .collect::<Result<_>>()?;
            Ok(DVector::from_vec(values))
        };
        truth.push(parse(&truth_cols)?);
        estimates.push(parse(&est_cols)?);
    }
    Ok(state_rmse(&estimates, &truth))
}
