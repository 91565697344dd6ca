use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside its admissible domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A computed PMF failed to sum to one. This indicates a formula or
    /// implementation defect, never bad input.
    #[error("PMF normalization failed: |sum - 1| = {residual:e}")]
    Normalization { residual: f64 },

    /// Numerical failure other than normalization (non-finite likelihood
    /// everywhere, failed root bracketing, ...).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The enumeration oracle refuses instances with more than 20 trials.
    #[error("enumeration refused: n = {0} exceeds the limit of 20 trials")]
    EnumerationTooLarge(usize),

    /// Malformed input text (sample files, sequence strings).
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
