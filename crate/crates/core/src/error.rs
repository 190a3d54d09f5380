use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at {location}: {reason}")]
    Malformed { location: String, reason: String },

    #[error("out-of-bounds coordinate ({x},{y}) for {width}x{height} sensor")]
    OutOfBounds {
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },

    #[error("timestamp regression: {t} ns after {prev} ns")]
    TimestampRegression { prev: u64, t: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-positive depth {0} m")]
    NonPositiveDepth(f64),

    #[error("parallel rays")]
    ParallelRays,

    #[error("triangulated point lies behind a camera")]
    BehindCamera,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("calibration mismatch: {0}")]
    Calibration(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable short code used in the CLI's machine-parseable error line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Malformed { .. } => "malformed",
            Error::OutOfBounds { .. } => "out_of_bounds",
            Error::TimestampRegression { .. } => "timestamp_regression",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NonPositiveDepth(_) => "non_positive_depth",
            Error::ParallelRays => "parallel_rays",
            Error::BehindCamera => "behind_camera",
            Error::Numerical(_) => "numerical",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Calibration(_) => "calibration",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
