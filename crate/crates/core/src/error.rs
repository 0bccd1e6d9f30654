use thiserror::Error;

use crate::pulse::PulseSequence;

#[derive(Debug, Error)]
pub enum Error {
    #[error("truncation leakage: guard-level population {population:.3e} exceeds {tolerance:.0e}")]
    Leakage { population: f64, tolerance: f64 },

    #[error("state is not normalized (squared norm {0})")]
    NotNormalized(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("certifier undefined: first moment is zero")]
    ZeroFirstMoment,

    #[error("integrator failure: {0}")]
    Integrator(String),

    #[error("creation search exhausted: {0}")]
    Synthesis(String),

    #[error("no mapping template reached tolerance; best error {best_error:.3e}")]
    MappingNotFound {
        best_error: f64,
        best: Option<Box<PulseSequence>>,
    },

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("fit did not converge: {0}")]
    NonConvergent(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
