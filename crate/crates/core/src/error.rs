use thiserror::Error;

/// Errors raised by geometry, problem, and solver operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point outside the interior domain: coordinate {index} = {value}")]
    Domain { index: usize, value: f64 },

    #[error("conjugate gradient overflow: coordinate {index} = {value} exceeds the exp limit")]
    Overflow { index: usize, value: f64 },

    #[error("no closed-form Bregman prox registered for ({geometry}, {function})")]
    UnsupportedPair {
        geometry: &'static str,
        function: &'static str,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("negative gap pair {0:e}: reference point is not a saddle point")]
    NegativeGap(f64),

    #[error("iterate norm {norm:e} exceeded the divergence threshold at stage {stage}, inner step {step}")]
    Divergence { stage: usize, step: usize, norm: f64 },

    #[error("saddle oracle failed: {0}")]
    OracleFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;
