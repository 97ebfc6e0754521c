use thiserror::Error;

/// Errors raised by the TomoSAR toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TomoError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid elevation grid: {0}")]
    InvalidGrid(String),

    #[error("zero elevation aperture: all baselines are equal")]
    ZeroAperture,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular system (condition estimate {0:e})")]
    Singular(f64),

    #[error("power iteration did not converge after {0} iterations")]
    PowerIterationDiverged(usize),

    #[error("solver diverged at iteration {0}: non-finite objective")]
    Divergence(usize),

    #[error("iteration cap of {0} reached before tolerance")]
    IterationCap(usize),

    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),
}

pub type Result<T> = std::result::Result<T, TomoError>;
