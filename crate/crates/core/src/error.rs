//! Error type shared by the whole crate.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed inconsistent arguments (dimension mismatches, bad ranges).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A point with z <= 0 cannot be projected.
    #[error("point behind camera: z = {0}")]
    BehindCamera(f64),

    /// Not enough correspondences / inliers to solve a pose.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// A forward-pass cache was used against a map that changed since.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Numerical failure inside an optimizer or solver.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A file had the wrong schema, magic, or content.
    #[error("ingestion error at {path}: {reason}")]
    Ingestion { path: PathBuf, reason: String },

    /// Tracking failed hard on too large a fraction of frames.
    #[error("tracking lost: {0}")]
    TrackingLost(String),

    #[error("i/o error at {path}: {source}")]
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

    pub fn ingestion(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Ingestion {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code category for the CLI: 2 usage, 3 ingestion,
    /// 4 numerical failure, 5 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 2,
            Error::Ingestion { .. } => 3,
            Error::BehindCamera(_)
            | Error::DegenerateGeometry(_)
            | Error::ContractViolation(_)
            | Error::Numerical(_)
            | Error::TrackingLost(_) => 4,
            Error::Io { .. } => 5,
        }
    }
}
