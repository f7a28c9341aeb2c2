use std::path::PathBuf;

/// Errors surfaced by the reconstruction pipeline.
///
/// Each variant maps to a stable machine-parseable code (see [`Error::code`])
/// used by the CLI's single-line error reports.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite {context} at iteration {iteration}")]
    NonFinite { context: String, iteration: u64 },

    #[error("optimizer aborted after {0} consecutive non-finite gradient steps")]
    OptimizerDiverged(u64),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("run directory locked: {0}")]
    Locked(PathBuf),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Stable machine-parseable error code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "E_INVALID_INPUT",
            Error::NonFinite { .. } => "E_NON_FINITE",
            Error::OptimizerDiverged(_) => "E_DIVERGED",
            Error::Io { .. } => "E_IO",
            Error::Parse { .. } => "E_PARSE",
            Error::Config(_) => "E_CONFIG",
            Error::Checkpoint(_) => "E_CHECKPOINT",
            Error::Locked(_) => "E_LOCKED",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
