use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("render record does not match the scene: {0}")]
    RecordMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error(transparent)]
    Ply(#[from] PlyError),

    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::DimensionMismatch(_) => "dimension-mismatch",
            Error::Degenerate(_) => "degenerate-geometry",
            Error::RecordMismatch(_) => "record-mismatch",
            Error::Config(_) => "config",
            Error::Dataset(_) => "dataset",
            Error::Ply(e) => e.category(),
            Error::Image { .. } => "image",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("malformed PLY header: {0}")]
    MalformedHeader(String),

    #[error("property `{name}` has type `{found}`, expected float or double")]
    PropertyType { name: String, found: String },

    #[error("missing required property `{0}`")]
    MissingProperty(String),

    #[error("truncated payload: expected {expected} bytes of vertex data, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("unsupported PLY format `{0}`")]
    UnsupportedFormat(String),
}

impl PlyError {
    pub fn category(&self) -> &'static str {
        match self {
            PlyError::MalformedHeader(_) => "ply-header",
            PlyError::PropertyType { .. } => "ply-property-type",
            PlyError::MissingProperty(_) => "ply-missing-property",
            PlyError::Truncated { .. } => "ply-truncated",
            PlyError::UnsupportedFormat(_) => "ply-format",
        }
    }
}
