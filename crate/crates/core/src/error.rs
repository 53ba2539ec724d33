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

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("{path}: row {row}: {message}")]
    Row { path: PathBuf, row: usize, message: String },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("channel span mismatch: right covers {right_s:.6} s from {right_start:.6}, left covers {left_s:.6} s from {left_start:.6}")]
    ChannelSpanMismatch {
        right_start: f64,
        right_s: f64,
        left_start: f64,
        left_s: f64,
    },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(f64, f64),

    #[error("sample rate {from} Hz is not an integer multiple of {to} Hz")]
    NonIntegerRatio { from: f64, to: f64 },

    #[error("zero variance channel {0}")]
    ZeroVariance(usize),

    #[error("conflicting intervals: [{0}, {1}) overlaps a different class at [{2}, {3})")]
    ConflictingIntervals(f64, f64, f64, f64),

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("all frames are masked")]
    EmptyMask,

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("cross-validation: {0}")]
    CrossValidation(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::MissingFile(_) => "missing_file",
            Error::Row { .. } => "malformed_row",
            Error::Format { .. } => "format",
            Error::ChannelSpanMismatch { .. } => "channel_span_mismatch",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::RateMismatch(..) => "rate_mismatch",
            Error::NonIntegerRatio { .. } => "non_integer_ratio",
            Error::ZeroVariance(_) => "zero_variance",
            Error::ConflictingIntervals(..) => "conflicting_intervals",
            Error::Invalid(_) => "invalid",
            Error::EmptyMask => "empty_mask",
            Error::Divergence { .. } => "divergence",
            Error::Checkpoint(_) => "checkpoint",
            Error::Config(_) => "config",
            Error::CrossValidation(_) => "cross_validation",
        }
    }
}
