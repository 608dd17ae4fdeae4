use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-video metadata stored next to each stream file as JSON.
///
/// Extra keys are tolerated so that producers can record provenance
/// (backbone, tapped layer, resampling) without breaking readers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamManifest {
    pub video_id: String,
    pub domain_id: String,
    pub fps: f64,
    pub num_frames: u64,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub class_names: Vec<String>,
}

impl StreamManifest {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::MalformedManifest(msg));
        if self.video_id.is_empty() {
            return bad("video_id is empty".into());
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if self.feature_dim < 1 {
            return bad("feature_dim must be at least 1".into());
        }
        if self.num_classes < 2 {
            return bad(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            ));
        }
        if self.class_names.len() != self.num_classes {
            return bad(format!(
                "class_names has {} entries, num_classes is {}",
                self.class_names.len(),
                self.num_classes
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: StreamManifest =
            serde_json::from_str(text).map_err(|e| Error::MalformedManifest(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Read and validate a manifest document.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<StreamManifest> {
    let text = fs::read_to_string(path)?;
    StreamManifest::from_json(&text)
}
