use std::path::PathBuf;

/// Crate-wide error type. The CLI maps these onto process exit codes, so new
/// variants should keep a clear kind.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("format error in {file}: {detail}")]
    Format { file: String, detail: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("missing artifact: {missing} (run `{produced_by}` first)")]
    MissingArtifact { missing: String, produced_by: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn format(file: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            file: file.into(),
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
