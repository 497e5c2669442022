use thiserror::Error;

/// Errors surfaced by the numerical layers. `Numerical` and `BlowUp` indicate
/// aborted computations whose partial results must not be trusted.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("constraint set is degenerate (rank-deficient after orthogonalization)")]
    DegenerateConstraints,

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("numerical abort: {0}")]
    Numerical(String),

    #[error("blow-up detected at t = {t}: max-norm {norm:.3e} exceeds guard")]
    BlowUp { t: f64, norm: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Eigensolver(e.to_string())
    }
}
