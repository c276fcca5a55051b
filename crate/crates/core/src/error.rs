use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite state encountered in {context}")]
    NonFinite { context: &'static str },

    /// Adaptive step fell below the configured minimum.
    #[error("step size {step:e} fell below minimum {min_step:e} at t = {time}")]
    StepUnderflow { time: f64, step: f64, min_step: f64 },

    #[error("exceeded {max_steps} integration steps at t = {time}")]
    MaxStepsExceeded { time: f64, max_steps: usize },

    #[error("time {t} outside trajectory span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },

    #[error("integration of ensemble node {node} failed: {source}")]
    Node {
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("insufficient data: {found} finite crossing times, at least {required} required")]
    InsufficientData { found: usize, required: usize },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Strips ensemble node wrappers to reach the underlying failure.
    pub fn root(&self) -> &Error {
        match self {
            Error::Node { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        match err.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            kind => Error::Parse(format!("{kind:?}")),
        }
    }
}
