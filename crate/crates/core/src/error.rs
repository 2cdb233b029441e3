use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("depth unavailable at pixel ({u}, {v})")]
    UnavailableDepth { u: f64, v: f64 },
    #[error("accumulator has no frames")]
    EmptyAccumulator,
    #[error("accumulator window of {0} frames is full")]
    WindowFull(usize),
    #[error("need at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },
    #[error("image {width}x{height} is smaller than 3x3")]
    ImageTooSmall { width: usize, height: usize },
    #[error("orientation {0} outside [0, pi]")]
    OrientationOutOfRange(f64),
    #[error("invalid normal ({0}, {1}, {2})")]
    InvalidNormal(f64, f64, f64),
    #[error("template has no features")]
    EmptyTemplate,
    #[error("config mismatch: {0}")]
    Config(String),
    #[error("unsupported database version {0}")]
    UnsupportedVersion(u16),
    #[error("database truncated")]
    Truncated,
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("template does not fit at anchor ({x}, {y})")]
    OutOfBounds { x: usize, y: usize },
    #[error("localization failed: no feature has usable depth")]
    LocalizationFailed,
    #[error("scene spec error: {0}")]
    Spec(String),
    #[error("evaluation error: {0}")]
    Eval(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
