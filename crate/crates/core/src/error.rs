use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("root iteration failed for nu={nu}, q={q}: {reason}")]
    RootIteration { nu: u32, q: u32, reason: String },

    #[error("invalid basis selection: {0}")]
    InvalidSelection(String),

    #[error("coefficients violate the real-image constraint (max defect {defect:.3e})")]
    RealityViolation { defect: f64 },

    #[error("sampled dictionary is numerically rank deficient (condition number {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("placement failed after {attempts} attempts: placed {placed} of {requested} targets (rough packing capacity {capacity})")]
    PlacementFailure {
        attempts: usize,
        placed: usize,
        requested: usize,
        capacity: usize,
    },

    #[error("invalid placement: {0}")]
    InvalidPlacement(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("zero reference: {0}")]
    ZeroReference(&'static str),

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("scheme mismatch: {0}")]
    SchemeMismatch(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by bad input (exit code 1) as opposed to numerical
    /// failures inside a stage (exit code 2).
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::RootIteration { .. }
                | Error::RankDeficient { .. }
                | Error::PlacementFailure { .. }
                | Error::RealityViolation { .. }
        )
    }
}
