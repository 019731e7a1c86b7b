use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("box ({cx}, {cy}, {w}, {h}) covers no pixel of a {width}x{height} image")]
    EmptyRegion {
        cx: f64,
        cy: f64,
        w: f64,
        h: f64,
        width: usize,
        height: usize,
    },

    #[error("mask is empty: {0}")]
    EmptyMask(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("no {side}x{side} placement lies fully outside the mask")]
    PlacementFailure { side: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("parse error in {source_name} at {location}: {message}")]
    Parse {
        source_name: String,
        location: String,
        message: String,
    },

    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("unknown reference: {0}")]
    Reference(String),

    #[error("entry {index} ({source_id}): {inner}")]
    Entry {
        index: usize,
        source_id: String,
        #[source]
        inner: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("png {}: {message}", path.display())]
    Png { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag for each variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::EmptyRegion { .. } => "empty_region",
            Error::EmptyMask(_) => "empty_mask",
            Error::Shape { .. } => "shape",
            Error::PlacementFailure { .. } => "placement_failure",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::Parse { .. } => "parse",
            Error::Pairing(_) => "pairing",
            Error::Reference(_) => "reference",
            Error::Entry { inner, .. } => inner.kind(),
            Error::Io { .. } => "io",
            Error::Png { .. } => "png",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
