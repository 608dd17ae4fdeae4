use std::io;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed manifest: {0}")]
    MalformedManifest(String),

    #[error("stream format mismatch: {0}")]
    FormatMismatch(String),

    #[error("truncated stream: expected {expected} records, got {got}")]
    TruncatedStream { expected: u64, got: u64 },

    #[error("non-finite value in frame {frame_index}")]
    NonFiniteValue { frame_index: u64 },

    #[error("frame index gap: expected {expected}, found {found}")]
    FrameIndexGap { expected: u64, found: u64 },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("malformed annotation (line {line}): {reason}")]
    MalformedAnnotation { line: u64, reason: String },

    #[error("no annotations for video {0}")]
    AnnotationMissing(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("aggregator is empty, no prediction available")]
    NoPrediction,

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
