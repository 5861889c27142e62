use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error(
        "ROI too close for this camera: disparity {disparity:.2} px at depth {depth_m} m \
         exceeds image width {width} px"
    )]
    RoiTooClose {
        disparity: f64,
        depth_m: f64,
        width: usize,
    },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("pyramid level mismatch: expected {expected} levels, got {got}")]
    LevelMismatch { expected: usize, got: usize },

    #[error("ground-truth pyramid required for sparse_gt decoding")]
    MissingGroundTruth,

    #[error("invalid octree level {level}, valid range 1..={max}")]
    InvalidLevel { level: usize, max: usize },

    #[error("checkpoint/config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("bad config value for `{key}`: {msg}")]
    BadConfig { key: String, msg: String },

    #[error("bad file format in {path}: {msg}")]
    BadFormat { path: PathBuf, msg: String },

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch} (level losses {level_losses:?})")]
    TrainDiverged {
        epoch: usize,
        batch: usize,
        level_losses: Vec<f64>,
    },

    #[error("{path}: {source}")]
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
}

pub type Result<T> = std::result::Result<T, Error>;
