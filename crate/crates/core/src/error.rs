use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("Fock level {level} is out of range for dimension {dim}")]
    LevelOutOfRange { level: usize, dim: usize },

    #[error("truncation: {0}")]
    Truncation(String),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("steady state is not unique: {0}")]
    DegenerateSteadyState(String),

    #[error("linear algebra failure: {0}")]
    Numerical(String),

    #[error("correlation did not decay within the integration horizon ({horizon} us)")]
    InsufficientDecay { horizon: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("did not converge: {0}")]
    NotConverged(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
