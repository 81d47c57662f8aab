use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid parameters: {0}")]
    BadParams(String),

    #[error("no mask with ratio in [{lo}, {hi}] after {attempts} attempts")]
    RatioUnreachable { lo: f64, hi: f64, attempts: u32 },

    #[error("image {width}x{height} is smaller than the {window}x{window} window")]
    TooSmall {
        width: usize,
        height: usize,
        window: usize,
    },

    #[error("failed to load perceptual model: {0}")]
    ModelLoad(String),

    #[error("backend failure: {0}")]
    BackendFailure(String),

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("backend timed out: {0}")]
    Timeout(String),

    #[error("objective requires the original image, which is not available")]
    MissingOriginal,

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("every record failed")]
    AllBackendsFailed,

    #[error("no usable records")]
    NoRecords,

    #[error("incomplete score grid: {0}")]
    IncompleteGrid(String),

    #[error("no finite values")]
    NoFiniteValues,

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier used in result records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::Io { .. } => "IoError",
            Error::UnsupportedFormat(_) => "UnsupportedFormat",
            Error::BadParams(_) => "BadParams",
            Error::RatioUnreachable { .. } => "RatioUnreachable",
            Error::TooSmall { .. } => "TooSmall",
            Error::ModelLoad(_) => "ModelLoadError",
            Error::BackendFailure(_) => "BackendFailure",
            Error::ProtocolViolation(_) => "ProtocolViolation",
            Error::Timeout(_) => "Timeout",
            Error::MissingOriginal => "MissingOriginal",
            Error::EmptyCorpus => "EmptyCorpus",
            Error::AllBackendsFailed => "AllBackendsFailed",
            Error::NoRecords => "NoRecords",
            Error::IncompleteGrid(_) => "IncompleteGrid",
            Error::NoFiniteValues => "NoFiniteValues",
            Error::Config(_) => "ConfigError",
        }
    }

    /// True for failures raised by an inpainting backend (as opposed to
    /// configuration or local I/O problems).
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            Error::BackendFailure(_) | Error::ProtocolViolation(_) | Error::Timeout(_)
        )
    }
}
