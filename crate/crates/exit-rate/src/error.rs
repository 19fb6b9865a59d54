//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Dimension mismatch between model pieces; `what` names the offending
    /// matrix or channel.
    #[error("shape error: {what}: expected {expected}, got {got}")]
    Shape {
        what: String,
        expected: String,
        got: String,
    },

    /// The diffusion field failed its uniform-ellipticity certificate.
    #[error("ellipticity violation at x = {x:?}: smallest eigenvalue of sigma*sigma^T is {eigenvalue}, below kappa = {kappa}")]
    Ellipticity {
        x: Vec<f64>,
        eigenvalue: f64,
        kappa: f64,
    },

    /// Invalid domain geometry or an operation that would empty the domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A precondition on operation inputs was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Trajectory blow-up or other non-finite state.
    #[error("non-finite state at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },

    /// Generator assembly produced a sign pattern incompatible with an
    /// M-matrix (strong mixed diffusion terms); a finer grid or diagonal
    /// sigma is required.
    #[error("M-matrix violation during assembly: {0}; use a finer grid or a diagonal diffusion field")]
    MMatrixViolation(String),

    /// Linear solve or eigen-iteration failure.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn shape(what: impl Into<String>, expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::Shape {
            what: what.into(),
            expected: expected.into(),
            got: got.into(),
        }
    }
}
