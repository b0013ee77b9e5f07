use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Domain errors (bad input, violated modelling assumptions, solver
/// failures) are kept apart from I/O so the command line can map them to
/// distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("constraint row {row}: {reason}")]
    BadRow { row: usize, reason: String },

    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model assumption violated: {0}")]
    ModelViolation(String),

    #[error("unsupported problem: {0}")]
    Unsupported(String),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("no SPN certificate: {0}")]
    NoCertificate(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the file system or serialization rather
    /// than by the optimization model itself.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
