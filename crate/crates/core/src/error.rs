use thiserror::Error;

/// Errors raised across the analytic and Monte Carlo engines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative evaluation (series, continued fraction, quadrature)
    /// stopped before reaching its tolerance.
    #[error("{what} did not converge after {terms_used} terms (last estimate {estimate:e})")]
    NonConvergence {
        what: &'static str,
        terms_used: usize,
        estimate: f64,
    },

    /// The scenario has no usable channel (e.g. every link disabled).
    #[error("degenerate scenario: {0}")]
    Degenerate(String),

    /// A moment-matched fit produced a non-positive parameter.
    #[error(
        "approximation invalid for scenario: mean {mean:e}, second moment {second_moment:e} \
         give shape {shape:e}, scale {scale:e}"
    )]
    InvalidFit {
        mean: f64,
        second_moment: f64,
        shape: f64,
        scale: f64,
    },

    /// Too few Monte Carlo samples for an estimator.
    #[error("need at least {required} samples, got {got}")]
    TooFewSamples { required: usize, got: usize },

    /// Configuration parse or validation failure, carrying the field path.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
