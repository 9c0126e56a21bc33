use thiserror::Error;

/// Errors produced by the simulation, quadrature and verification routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("quadrature for {what} did not converge (estimated error {error:e} after {intervals} subintervals)")]
    Quadrature {
        what: &'static str,
        error: f64,
        intervals: usize,
    },

    #[error("finite-difference noise in {what}: {noise:e} exceeds 1% of the central value {central:e}")]
    FiniteDifference {
        what: &'static str,
        noise: f64,
        central: f64,
    },

    #[error("grid resolution {fine} is not a multiple of {coarse}")]
    Divisibility { fine: usize, coarse: usize },

    #[error("series remainder {tail_bound:e} exceeds tolerance {tolerance:e}; raise K_max (currently {k_max})")]
    SeriesTruncation {
        tail_bound: f64,
        tolerance: f64,
        k_max: usize,
    },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("model not supported here: {0}")]
    Unsupported(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors that signal an exhausted numerical budget
    /// (quadrature, finite differences, series truncation).
    pub fn is_numerical_budget(&self) -> bool {
        matches!(
            self,
            Error::Quadrature { .. } | Error::FiniteDifference { .. } | Error::SeriesTruncation { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
