use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Each variant maps to a stable process exit code via [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid scenario, feeder or device configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an operation's contract (dimension mismatch, stepping a
    /// finished episode, out-of-bounds action after clamping, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A non-finite value appeared where only finite values are allowed.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("power flow did not converge: {0}")]
    PowerFlow(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged: {0}")]
    Training(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short category tag printed by the CLI.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Contract(_) => "contract",
            Error::NonFinite(_) => "non-finite",
            Error::PowerFlow(_) => "powerflow",
            Error::Checkpoint(_) => "checkpoint",
            Error::Training(_) => "training",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Parse { .. } => 3,
            Error::Io { .. } => 4,
            Error::Contract(_) => 5,
            Error::NonFinite(_) => 6,
            Error::PowerFlow(_) => 7,
            Error::Checkpoint(_) => 8,
            Error::Training(_) => 9,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
