use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the refinement pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A point ended up at or behind the image plane. `index` names the
    /// offending contour point when the error comes from a loss evaluation.
    #[error("point behind camera (z = {z}){}", index.map(|i| format!(" at contour point {i}")).unwrap_or_default())]
    BehindCamera { index: Option<usize>, z: f64 },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("contour is empty")]
    EmptyContour,

    #[error("object projects fully outside the image for view {0}")]
    DegenerateView(usize),

    #[error("hypothesis renders to an empty silhouette")]
    DegenerateHypothesis,

    #[error("target object is not visible in the scene")]
    DegenerateScene,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
