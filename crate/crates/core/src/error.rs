use thiserror::Error;

/// Errors raised by the numerical routines and the file formats they read.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field does not match grid: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular circulation matrix (det = {0:e})")]
    SingularCirculationMatrix(f64),

    #[error("linear solve failed: residual {residual:e}")]
    SolveFailed { residual: f64 },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("no sign change of J{order} on [{lo}, {hi}]")]
    NoSignChange { order: u32, lo: f64, hi: f64 },

    #[error("energy decreased by {0:e} during ascent")]
    EnergyDecrease(f64),

    #[error("non-finite vorticity at t = {0}")]
    NonFinite(f64),

    #[error("membership violation: {0}")]
    Membership(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
