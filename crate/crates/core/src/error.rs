//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("chart domain error: {0}")]
    ChartDomain(String),
    #[error("singular map: {0}")]
    SingularMap(String),
    #[error("singular coefficient: {0}")]
    SingularCoefficient(String),
    #[error("resonance: {0}")]
    Resonance(String),
    #[error("stiffness budget exceeded at t={t:.6e} (h={h:.3e}, steps={steps}): {detail}")]
    Stiffness {
        t: f64,
        h: f64,
        steps: usize,
        detail: String,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("empty set: {0}")]
    EmptySet(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
