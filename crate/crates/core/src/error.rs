use thiserror::Error;

/// Errors raised by the library. The CLI maps them onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("state space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("atom count {count} exceeds the solver cap {cap}")]
    CapExceeded { count: usize, cap: usize },

    #[error(
        "thinning envelope violated at t={time}: rate {rate} exceeds bound {bound} \
         (state {state}); the rate bound is not valid along the flow"
    )]
    EnvelopeViolation {
        time: f64,
        rate: f64,
        bound: f64,
        state: String,
    },

    #[error("characteristic left the half-line: X={value} at s={time}")]
    Nonnegativity { value: f64, time: f64 },

    #[error("evaluation point t={t} lies outside the solved grid [{lo}, {hi}]")]
    Extrapolation { t: f64, lo: f64, hi: f64 },

    #[error("exponential weights overflowed ({0}); use a smaller horizon or a bounded rate")]
    Overflow(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
