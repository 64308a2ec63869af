//! Secure state estimation for discrete-time LTI systems whose sensors are
//! subject to sparse, arbitrary and time-varying attacks.
//!
//! The pieces fit together as follows:
//!
//! * [`lti`] builds the stacked observability matrix of a measurement window
//!   and its full QR split;
//! * [`l1`] solves the equality-constrained l1 program that recovers the
//!   stacked attack from the state-free residual;
//! * [`decoder`] turns those into the secure estimator and provides the
//!   eigenvector-support correctability analysis;
//! * [`kalman`] and [`fusion`] combine the decoder with a Kalman filter, the
//!   decoder acting as a pre-filter that strips the estimated attack;
//! * [`quadrotor`], [`attacks`] and [`scenario`] drive the whole thing on a
//!   linearized quadrotor under man-in-the-middle and GPS-spoofing attacks.

pub mod attacks;
pub mod control;
pub mod decoder;
pub mod error;
pub mod fusion;
pub mod kalman;
pub mod l1;
pub mod linalg;
pub mod lti;
pub mod quadrotor;
pub mod scenario;

pub use decoder::{
    check_q_correctable, correctability_report, min_window_length, AttackEstimate,
    CorrectabilityReport, DecodeResult, Decoder, MeasurementWindow,
};
pub use error::{Error, Result};
pub use fusion::{EstimatorMode, FusionConfig, FusionEstimator};
pub use kalman::KalmanState;
pub use l1::{
    solve_l1_equality, thresholded_support, L1Problem, L1Solution, SolveStatus, SolverConfig,
};
pub use lti::{build_observability, factorize, DecoderMatrices, LtiSystem, Trajectory};
pub use quadrotor::{FeedbackDesign, MeasurementSelection, QuadrotorModel, QuadrotorParams};
pub use scenario::{run_scenario, RunReport, ScenarioConfig};
