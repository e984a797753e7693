use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point lies behind the camera (camera-frame z = {0})")]
    PointBehindCamera(f64),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("intrinsics are singular")]
    SingularIntrinsics,
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("image {width}x{height} is too small for a {window}x{window} window")]
    ImageTooSmall { width: usize, height: usize, window: usize },
    #[error("resolution mismatch: expected {expected:?}, got {actual:?}")]
    ResolutionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("no source views supplied")]
    NoSourceViews,
    #[error("softmax temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("depth map has no valid pixels")]
    EmptyDepthMap,
    #[error("degenerate depth range [{0}, {1}]")]
    DegenerateRange(f64, f64),
    #[error("insufficient calibration data: {0}")]
    InsufficientData(String),
    #[error("invalid plane count {0}: at least 2 planes are required")]
    InvalidCount(usize),
    #[error("invalid hypothesis planes: {0}")]
    InvalidPlanes(String),
    #[error("stage {0} requires the previous stage output")]
    MissingPreviousStage(usize),
    #[error("at least 2 views are required, got {0}")]
    InsufficientViews(usize),
    #[error("no jointly valid pixels")]
    NoValidPixels,
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("unsupported format variant: {0}")]
    UnsupportedVariant(String),
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Broad failure class, used for CLI exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    ParseOrIo,
    Numerical,
}

impl Error {
    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parse { .. } | Error::Io { .. } | Error::UnsupportedVariant(_) => ErrorKind::ParseOrIo,
            Error::InvalidSpec(_) | Error::InvalidConfig(_) => ErrorKind::Usage,
            _ => ErrorKind::Numerical,
        }
    }
}
