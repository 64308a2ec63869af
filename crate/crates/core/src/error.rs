use thiserror::Error;

/// Errors produced by model construction, decoding, filtering and design.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("system is unobservable over the window (rank {rank} < {n})")]
    UnobservableSystem { rank: usize, n: usize },

    #[error("invalid l1 problem: {0}")]
    InvalidProblem(String),

    #[error("innovation covariance is numerically singular")]
    SingularInnovation,

    #[error("q = {q} is not correctable: {reason}")]
    NotCorrectable { q: usize, reason: String },

    #[error("pair (A0, B) is not controllable (rank {rank} < {n})")]
    Uncontrollable { rank: usize, n: usize },

    #[error(
        "Riccati iteration did not converge after {iterations} iterations (last change {delta:e})"
    )]
    RiccatiDivergence { iterations: usize, delta: f64 },

    #[error("pole placement failed: {reason} (residual {residual:e})")]
    PlacementFailed { reason: String, residual: f64 },

    #[error("secure feedback design gave up after {tries} tries (best s_min = {best_s_min})")]
    MaxTriesExceeded {
        tries: usize,
        best_s_min: usize,
        best: Option<Box<crate::quadrotor::FeedbackDesign>>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
