use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration. `pointer` is a JSON pointer into the config document
    /// (empty when the problem is not tied to a single key).
    #[error("config error at '{pointer}': {message}")]
    Config { pointer: String, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("injection error: {0}")]
    Injection(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn config(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 1 = configuration, 2 = data (missing files, bad CSVs, schema problems),
    /// 3 = runtime or numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 1,
            Error::Io { .. } | Error::Schema(_) | Error::Data(_) | Error::Encoding(_) | Error::Format(_) => 2,
            Error::Shape(_)
            | Error::Numeric(_)
            | Error::Protocol(_)
            | Error::Injection(_)
            | Error::Contract(_) => 3,
        }
    }
}
