//! Stream data model: per-frame records, manifests, annotations and the
//! binary stream file format.
//!
//! One [`FrameRecord`] is the backbone output for one position of the
//! sliding window: the embedding used for boundary localization and the
//! class scores that feed the aggregators. Frame indices are 0-based and
//! dense within a stream.

mod annotations;
mod dataset;
mod format;
mod manifest;

pub use annotations::{
    load_annotations, parse_annotations, write_annotations, Label, LabelSegment,
};
pub use dataset::{sibling_paths, StreamDataset};
pub use format::{
    encode_to_vec, open_stream, write_stream, StreamHeader, StreamReader, StreamWriter, HEADER_LEN,
    MAGIC, VERSION,
};
pub use manifest::{load_manifest, StreamManifest};

use serde::{Deserialize, Serialize};

/// One time step of a stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub feature: Vec<f32>,
    pub logits: Vec<f32>,
}

impl FrameRecord {
    pub fn new(frame_index: u64, feature: Vec<f32>, logits: Vec<f32>) -> Self {
        Self {
            frame_index,
            feature,
            logits,
        }
    }

    /// A zero-filled record, useful as a reusable read buffer.
    pub fn zeroed(feature_dim: usize, num_classes: usize) -> Self {
        Self::new(0, vec![0.0; feature_dim], vec![0.0; num_classes])
    }

    pub fn is_finite(&self) -> bool {
        self.feature
            .iter()
            .chain(&self.logits)
            .all(|v| v.is_finite())
    }
}
