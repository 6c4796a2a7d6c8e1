use thiserror::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Scenario / parameter files that fail to parse or validate.
    #[error("config error: {0}")]
    Config(String),

    /// A solver or estimator could not produce a finite answer.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The coincidence histogram has no accidental counts, so the ratio
    /// estimate is infinite. Counts are attached for diagnostics.
    #[error("infinite estimate: {coincidences} coincidences, 0 accidentals")]
    InfiniteEstimate { coincidences: u64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Stream or CSV parse failure with a 1-based line position.
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code used by the CLI: 2 for configuration problems,
    /// 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::Io(_) => 2,
            Error::Domain(_) | Error::Numerical(_) | Error::InfiniteEstimate { .. } => 3,
        }
    }
}
