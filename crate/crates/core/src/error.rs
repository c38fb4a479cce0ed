use thiserror::Error;

/// Errors raised by the numerical engines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("metric is not a valid Finsler metric: {0}")]
    MetricValidity(String),
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("ray horizon exhausted: {0} (extend ray horizon)")]
    Horizon(String),
    #[error("level error: {0}")]
    Level(String),
    #[error("ray has no minimality certificate")]
    NotCertified,
    #[error("config error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("corrupt payload: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    /// The innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
