use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        actual: String,
    },

    #[error("point {point} outside knot range [{lo}, {hi}]")]
    OutOfRange { point: f64, lo: f64, hi: f64 },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("chain initialisation failed: {0}")]
    Initialization(String),

    #[error("fit did not converge after {iterations} iterations (best m = {best_m}, lambda = {best_lambda}, rss = {best_rss})")]
    NonConvergence {
        iterations: usize,
        best_m: f64,
        best_lambda: f64,
        best_rss: f64,
    },

    #[error("surface value {value} outside bounds [{lower}, {upper}]")]
    OutOfBounds { value: f64, lower: f64, upper: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(what: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            what,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// True for errors caused by numerical breakdown rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Initialization(_) | Error::NonConvergence { .. } | Error::Numeric(_)
        )
    }
}
