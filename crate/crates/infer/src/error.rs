use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    ConfigParse(#[from] toml::de::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}:{line}: {message}")]
    Dataset {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Inference(#[from] pmd::Error),
    #[error("metrics: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config write: {0}")]
    ConfigWrite(#[from] toml::ser::Error),
    #[error("summarize: {0}")]
    Summarize(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Attach the offending path to a bare I/O error.
pub fn io_at(path: &std::path::Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}
