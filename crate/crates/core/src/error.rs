use thiserror::Error;

/// Errors raised by the solver core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("grid size {0} is invalid: must be even and at least 8")]
    InvalidGrid(usize),

    #[error("array has {actual} samples but the grid needs {expected}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("fields live on different grids ({0} vs {1} points per side)")]
    GridMismatch(usize, usize),

    /// Raised by Poisson / Biot-Savart inversions; usually an un-neutralized
    /// charge density or a vorticity field with a net circulation.
    #[error("field has non-zero mean {mean:e} (largest coefficient {scale:e})")]
    NonZeroMean { mean: f64, scale: f64 },

    #[error("mollification scale must be non-negative, got {0}")]
    NegativeScale(f64),

    #[error("non-finite value encountered at t = {time}")]
    NonFinite { time: f64 },

    #[error("invalid physical parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("sample {index} is not strictly positive ({value})")]
    NonPositiveSample { index: usize, value: f64 },

    #[error("records are not equally spaced in time")]
    NonuniformSpacing,

    #[error("Picard iteration failed to contract (last ratios {ratios:?})")]
    NoContraction { ratios: Vec<f64> },

    #[error("output sink failed at t = {time}: {message}")]
    Sink { time: f64, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
