use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid dimensions {x}x{y}x{z}: {reason}")]
    InvalidDims {
        x: usize,
        y: usize,
        z: usize,
        reason: &'static str,
    },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("crop [{offset:?} + {dims:?}] exceeds volume bounds {bounds:?} and padding was not requested")]
    CropOutOfBounds {
        offset: [i64; 3],
        dims: [usize; 3],
        bounds: [usize; 3],
    },

    #[error("unsupported resampling factor {0} (only 2 is supported)")]
    UnsupportedFactor(usize),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("scene generation failed: {0}")]
    InfeasiblePlacement(String),

    #[error("histogram error: {0}")]
    Histogram(String),

    #[error("depth image has no valid pixels")]
    EmptyDepth,

    #[error("no cameras supplied for fusion")]
    NoCameras,

    #[error("mask selects no voxels")]
    EmptyMask,

    #[error("missing conditioning input: {0}")]
    MissingInput(&'static str),

    #[error("level {level} cannot be trained before level {needed} is available")]
    LevelOrder { level: usize, needed: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("missing artifact {path}; run `voxfill {producer}` first")]
    MissingArtifact { path: PathBuf, producer: &'static str },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
