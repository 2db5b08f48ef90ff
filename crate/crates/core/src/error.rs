use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("version mismatch: {0}")]
    Version(String),
    #[error("corrupt file {}: {reason} (byte offset {offset})", path.display())]
    Corruption {
        path: PathBuf,
        offset: u64,
        reason: String,
    },
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("missing audio files: {}", join_paths(.0))]
    MissingFiles(Vec<PathBuf>),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user-supplied data or configuration.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Input(_)
                | Error::Config(_)
                | Error::Format(_)
                | Error::Version(_)
                | Error::Corruption { .. }
                | Error::Conflict(_)
                | Error::MissingFiles(_)
                | Error::Io { .. }
        )
    }
}

fn join_paths(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(", ")
}
