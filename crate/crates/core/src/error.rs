use thiserror::Error;

pub type Result<T> = std::result::Result<T, LdsError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LdsError {
    /// Shapes of matrices or vectors do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An input violates a documented precondition (non-finite entries, bad bounds, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// The transition matrix has spectral radius at or above one.
    #[error("unstable transition matrix (spectral radius {0})")]
    Unstable(f64),

    /// A covariance that must be positive definite is (numerically) singular.
    #[error("degenerate covariance: {0}")]
    Degenerate(String),

    /// A sufficient-statistic accumulator in the M-step cannot be inverted.
    #[error("rank-deficient accumulator: {0}")]
    RankDeficient(String),

    /// A generator left its numerically meaningful range.
    #[error("sequence diverged at step {step} (|x| = {value})")]
    Diverged { step: usize, value: f64 },

    /// Not enough samples for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Every candidate order failed to fit.
    #[error("no model order could be fitted: {0}")]
    AllOrdersFailed(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for LdsError {
    fn from(e: std::io::Error) -> Self {
        LdsError::Io(e.to_string())
    }
}

impl From<csv::Error> for LdsError {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(_) => LdsError::Io(e.to_string()),
            _ => LdsError::Parse(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for LdsError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            LdsError::Io(e.to_string())
        } else {
            LdsError::Parse(e.to_string())
        }
    }
}
