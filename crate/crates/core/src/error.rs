use thiserror::Error;

/// Errors raised by systems, observables, estimators and the experiment runner.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("symbol window exceeded: coordinate {index} is outside the stored range [{low}, {high}]")]
    Window { index: i64, low: i64, high: i64 },

    #[error("kind mismatch: {0}")]
    KindMismatch(String),

    #[error("integer overflow: {0}")]
    Overflow(String),

    #[error("no closed form: {0}")]
    NoClosedForm(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("cost budget exceeded: {needed} > {budget}")]
    Budget { needed: u128, budget: u128 },

    #[error("N = {n} is below the threshold N_J = {threshold}")]
    BelowThreshold { n: u64, threshold: u64 },

    #[error("config error at {location}: {message}")]
    Config { location: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn pre(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn config(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            location: location.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
