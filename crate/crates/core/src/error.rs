use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("degenerate probe: the quantum Fisher information matrix is singular")]
    DegenerateProbe,

    #[error("insufficient data: grid point {point} has no recorded events")]
    InsufficientData { point: usize },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("invalid outcome {outcome}: model has {outcomes} outcomes")]
    InvalidOutcome { outcome: usize, outcomes: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("prior recovery failed: {0}")]
    PriorRecovery(String),

    #[error("shift unsupported: grid interval of width {width} does not cover a full 2π period")]
    ShiftUnsupported { width: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate update: outcome {outcome} excluded every particle")]
    DegenerateUpdate { outcome: usize },

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad inputs or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateProbe
                | Error::PriorRecovery(_)
                | Error::DegenerateUpdate { .. }
                | Error::InvalidModel(_)
                | Error::NonFinite(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
