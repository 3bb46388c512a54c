use std::path::PathBuf;

/// Errors produced by ingestion, model construction, filtering and evaluation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// PCD parse failure. `location` names a header line or a byte offset.
    #[error("PCD {location}: {message}")]
    Pcd { location: String, message: String },

    /// CSV parse failure at a 1-based row number.
    #[error("CSV row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("box annotations: {0}")]
    Boxes(String),

    #[error("GDG file: {0}")]
    GdgFormat(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Inputs that are well-formed individually but inconsistent together.
    #[error("data error: {0}")]
    Data(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
