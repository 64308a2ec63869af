//! Secure decoder as a pre-filter for a Kalman filter.
//!
//! Each step decodes the trailing window of the last `T` measurements, takes
//! the attack estimate of the newest slice, subtracts it from the incoming
//! measurement and hands the cleaned measurement to a standard Kalman update.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::decoder::{propagate_state, Decoder, MeasurementWindow};
use crate::error::{dim, Error, Result};
use crate::kalman::{self, KalmanState};
use crate::l1::{default_support_eps, SolveStatus, SolverConfig};
use crate::lti::{LtiSystem, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorMode {
    #[serde(rename = "kf")]
    KfOnly,
    #[serde(rename = "se")]
    SeOnly,
    #[serde(rename = "kf_se")]
    KfPlusSe,
}

impl EstimatorMode {
    pub const ALL: [EstimatorMode; 3] = [
        EstimatorMode::KfOnly,
        EstimatorMode::SeOnly,
        EstimatorMode::KfPlusSe,
    ];

    pub fn uses_decoder(self) -> bool {
        self != EstimatorMode::KfOnly
    }

    pub fn label(self) -> &'static str {
        match self {
            EstimatorMode::KfOnly => "kf",
            EstimatorMode::SeOnly => "se",
            EstimatorMode::KfPlusSe => "kf_se",
        }
    }
}

impl fmt::Display for EstimatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EstimatorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '+'], "_").as_str() {
            "kf" | "kfonly" | "kf_only" => Ok(EstimatorMode::KfOnly),
            "se" | "seonly" | "se_only" => Ok(EstimatorMode::SeOnly),
            "kf_se" | "kfplusse" | "kf_plus_se" => Ok(EstimatorMode::KfPlusSe),
            other => Err(Error::Config(format!("unknown estimator mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusionConfig {
    pub solver: SolverConfig,
    /// Attack-estimate entries at or below this magnitude are treated as zero.
    /// The decoder's own support threshold always applies as well.
    pub attack_floor: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            attack_floor: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub x_hat: DVector<f64>,
    pub e_hat: DVector<f64>,
    /// Whether a full window was decoded successfully at this step.
    pub decoded: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderEvent {
    pub step: usize,
    pub status: SolveStatus,
}

pub struct FusionEstimator {
    sys: LtiSystem,
    decoder: Option<Decoder>,
    mode: EstimatorMode,
    config: FusionConfig,
    kf: KalmanState,
    /// Last `T` measurements.
    measurements: VecDeque<DVector<f64>>,
    /// Inputs applied after each stored measurement, at most `T - 1` of them.
    inputs: VecDeque<DVector<f64>>,
    last_input: Option<DVector<f64>>,
    se_state: DVector<f64>,
    next_step: usize,
    /// Step `next_step` was observed and waits for its input.
    awaiting_input: bool,
    events: Vec<DecoderEvent>,
}

impl FusionEstimator {
    pub fn new(
        sys: &LtiSystem,
        window: usize,
        mode: EstimatorMode,
        kf: KalmanState,
        config: FusionConfig,
    ) -> Result<Self> {
        if kf.x_hat.len() != sys.n() {
            return Err(dim("Kalman state does not match the system"));
        }
        let decoder = if mode.uses_decoder() {
            Some(Decoder::new(sys, window)?)
        } else {
            None
        };
        Ok(Self {
            sys: sys.clone(),
            decoder,
            mode,
            config,
            se_state: kf.x_hat.clone(),
            kf,
            measurements: VecDeque::with_capacity(window),
            inputs: VecDeque::with_capacity(window),
            last_input: None,
            next_step: 0,
            awaiting_input: false,
            events: Vec::new(),
        })
    }

    pub fn mode(&self) -> EstimatorMode {
        self.mode
    }
    pub fn kalman(&self) -> &KalmanState {
        &self.kf
    }
    pub fn events(&self) -> &[DecoderEvent] {
        &self.events
    }
    pub fn history_len(&self) -> usize {
        self.measurements.len()
    }

    /// Estimate of the next state before its measurement arrives:
    /// the current estimate pushed through the model with input `u`.
    pub fn predicted_state(&self, u: &DVector<f64>) -> DVector<f64> {
        let current = match self.mode {
            EstimatorMode::SeOnly => &self.se_state,
            _ => &self.kf.x_hat,
        };
        self.sys.a() * current + self.sys.b() * u
    }

    /// Current state estimate (the last step's output).
    pub fn estimate(&self) -> &DVector<f64> {
        match self.mode {
            EstimatorMode::SeOnly => &self.se_state,
            _ => &self.kf.x_hat,
        }
    }

    /// Process measurement `y(k)` and record the input `u(k)` applied afterwards.
    pub fn step(&mut self, k: usize, y: &DVector<f64>, u: &DVector<f64>) -> Result<StepOutput> {
        if u.len() != self.sys.m() {
            return Err(dim(format!("step expects u in R^{}", self.sys.m())));
        }
        let out = self.observe(k, y)?;
        self.apply_input(u)?;
        Ok(out)
    }

    /// Record the input applied at the step last observed, so the estimate
    /// can drive the input that follows it.
    pub fn apply_input(&mut self, u: &DVector<f64>) -> Result<()> {
        if !self.awaiting_input {
            return Err(dim(format!(
                "step {} has not been observed",
                self.next_step
            )));
        }
        if u.len() != self.sys.m() {
            return Err(dim(format!("input must lie in R^{}", self.sys.m())));
        }
        self.inputs.push_back(u.clone());
        self.last_input = Some(u.clone());
        self.next_step += 1;
        self.awaiting_input = false;
        Ok(())
    }

    /// Process measurement `y(k)`. Must be followed by [`Self::apply_input`]
    /// before the next observation.
    pub fn observe(&mut self, k: usize, y: &DVector<f64>) -> Result<StepOutput> {
        if self.awaiting_input || k != self.next_step {
            return Err(dim(format!(
                "expected input for step {} before observing step {k}",
                self.next_step
            )));
        }
        if y.len() != self.sys.p() {
            return Err(dim(format!("observe expects y in R^{}", self.sys.p())));
        }
        let window = self.decoder.as_ref().map_or(1, Decoder::window);
        if self.measurements.len() == window {
            self.measurements.pop_front();
            self.inputs.pop_front();
        }
        self.measurements.push_back(y.clone());

        let decoded = match &self.decoder {
            Some(decoder) if self.measurements.len() == window => {
                let steps: Vec<_> = self.measurements.iter().cloned().collect();
                let inputs =
                    (self.sys.m() > 0).then(|| self.inputs.iter().cloned().collect::<Vec<_>>());
                let w = MeasurementWindow::from_steps(&steps, inputs.clone())?;
                let result = decoder.decode(&w, &self.config.solver)?;
                if result.status == SolveStatus::Optimal {
                    Some((result, inputs))
                } else {
                    self.events.push(DecoderEvent {
                        step: k,
                        status: result.status,
                    });
                    None
                }
            }
            _ => None,
        };

        let mut e_hat = DVector::zeros(self.sys.p());
        if let Some((result, _)) = &decoded {
            let floor = self
                .config
                .attack_floor
                .max(default_support_eps(&result.attack.e_hat));
            let last = &result.attack.per_step[window - 1];
            e_hat = last.map(|e| if e.abs() > floor { e } else { 0.0 });
        }

        let x_hat = match self.mode {
            EstimatorMode::SeOnly => {
                self.se_state = match &decoded {
                    Some((result, inputs)) => propagate_state(
                        &self.sys,
                        &result.x0_hat,
                        window - 1,
                        inputs.as_deref().unwrap_or(&[]),
                    )?,
                    None if k == 0 => self.se_state.clone(),
                    None => {
                        let u_prev = self
                            .last_input
                            .clone()
                            .unwrap_or_else(|| DVector::zeros(self.sys.m()));
                        self.sys.a() * &self.se_state + self.sys.b() * u_prev
                    }
                };
                self.se_state.clone()
            }
            EstimatorMode::KfOnly | EstimatorMode::KfPlusSe => {
                if k > 0 {
                    let u_prev = self
                        .last_input
                        .clone()
                        .unwrap_or_else(|| DVector::zeros(self.sys.m()));
                    self.kf = kalman::predict(&self.kf, &self.sys, &u_prev)?;
                }
                let cleaned = y - &e_hat;
                self.kf = kalman::update(&self.kf, &self.sys, &cleaned)?;
                self.kf.x_hat.clone()
            }
        };

        self.awaiting_input = true;
        Ok(StepOutput {
            x_hat,
            e_hat,
            decoded: decoded.is_some(),
        })
    }
}

#[derive(Clone, Debug, Default)]
pub struct FusionRun {
    pub x_hat: Vec<DVector<f64>>,
    pub e_hat: Vec<DVector<f64>>,
    pub decoded: Vec<bool>,
    pub events: Vec<DecoderEvent>,
    /// Root-mean-square of `||x_hat(k) - x(k)||` over all steps.
    pub state_rmse: f64,
    /// `e_hat(k) - e(k)` per step, when the true attack is supplied.
    pub attack_error: Option<Vec<DVector<f64>>>,
}

/// Root mean square of the per-step Euclidean errors.
pub fn state_rmse(estimates: &[DVector<f64>], truth: &[DVector<f64>]) -> f64 {
    if estimates.is_empty() {
        return 0.0;
    }
    let sum: f64 = estimates
        .iter()
        .zip(truth)
        .map(|(e, x)| (e - x).norm_squared())
        .sum();
    (sum / estimates.len() as f64).sqrt()
}

/// Feed a recorded trajectory through the estimator.
pub fn run(
    est: &mut FusionEstimator,
    traj: &Trajectory,
    attacks: Option<&[DVector<f64>]>,
) -> Result<FusionRun> {
    let mut out = FusionRun::default();
    for (k, (y, u)) in traj.measurements.iter().zip(&traj.inputs).enumerate() {
        let step = est.step(k, y, u)?;
        out.x_hat.push(step.x_hat);
        out.e_hat.push(step.e_hat);
        out.decoded.push(step.decoded);
    }
    out.events = est.events().to_vec();
    out.state_rmse = state_rmse(
        &out.x_hat,
        &traj.states[..out.x_hat.len().min(traj.states.len())],
    );
    out.attack_error = attacks.map(|e| out.e_hat.iter().zip(e).map(|(eh, e)| eh - e).collect());
    Ok(out)
}
