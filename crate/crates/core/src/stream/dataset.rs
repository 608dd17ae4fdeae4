use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::{
    load_annotations, load_manifest, open_stream, write_annotations, write_stream, FrameRecord,
    LabelSegment, StreamManifest,
};
use crate::error::{Error, Result};

/// A fully loaded video: manifest, every frame record and its annotations.
///
/// On disk a dataset is three sibling files sharing a stem:
/// `<stem>.json` (manifest), `<stem>.egws` (stream) and `<stem>.csv`
/// (annotations).
#[derive(Debug, Clone, PartialEq)]
pub struct StreamDataset {
    pub manifest: StreamManifest,
    pub records: Vec<FrameRecord>,
    pub segments: Vec<LabelSegment>,
}

impl StreamDataset {
    pub fn new(
        manifest: StreamManifest,
        records: Vec<FrameRecord>,
        mut segments: Vec<LabelSegment>,
    ) -> Result<Self> {
        manifest.validate()?;
        if records.len() as u64 != manifest.num_frames {
            return Err(Error::DimensionMismatch {
                what: "record count",
                expected: manifest.num_frames as usize,
                got: records.len(),
            });
        }
        for (i, r) in records.iter().enumerate() {
            if r.frame_index != i as u64 {
                return Err(Error::FrameIndexGap {
                    expected: i as u64,
                    found: r.frame_index,
                });
            }
            if r.feature.len() != manifest.feature_dim {
                return Err(Error::DimensionMismatch {
                    what: "feature",
                    expected: manifest.feature_dim,
                    got: r.feature.len(),
                });
            }
            if r.logits.len() != manifest.num_classes {
                return Err(Error::DimensionMismatch {
                    what: "logits",
                    expected: manifest.num_classes,
                    got: r.logits.len(),
                });
            }
        }
        for seg in &segments {
            if seg.video_id != manifest.video_id {
                return Err(Error::MalformedAnnotation {
                    line: 0,
                    reason: format!(
                        "segment for video {} in dataset {}",
                        seg.video_id, manifest.video_id
                    ),
                });
            }
            if seg.stop_frame >= manifest.num_frames || seg.start_frame > seg.stop_frame {
                return Err(Error::MalformedAnnotation {
                    line: 0,
                    reason: format!(
                        "segment [{}, {}] outside [0, {})",
                        seg.start_frame, seg.stop_frame, manifest.num_frames
                    ),
                });
            }
            if let Some(c) = seg.label.class() {
                if c >= manifest.num_classes {
                    return Err(Error::MalformedAnnotation {
                        line: 0,
                        reason: format!("label {c} outside [0, {})", manifest.num_classes),
                    });
                }
            }
        }
        segments.sort_by_key(|s| (s.start_frame, s.stop_frame));
        Ok(Self {
            manifest,
            records,
            segments,
        })
    }

    /// Loads `<stem>.json`, `<stem>.egws` and `<stem>.csv`.
    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let manifest_path = manifest_path.as_ref();
        let manifest = load_manifest(manifest_path)?;
        let (stream_path, annotation_path) = sibling_paths(manifest_path);
        let records = open_stream(&stream_path, &manifest)?.collect::<Result<Vec<_>>>()?;
        let segments: Vec<_> = load_annotations(&annotation_path, manifest.num_classes)?
            .into_iter()
            .filter(|s| s.video_id == manifest.video_id)
            .collect();
        if segments.is_empty() {
            return Err(Error::AnnotationMissing(manifest.video_id));
        }
        Self::new(manifest, records, segments)
    }

    /// Writes the dataset as `<dir>/<video_id>.{json,egws,csv}` and returns
    /// the manifest path.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let manifest_path = dir.join(format!("{}.json", self.manifest.video_id));
        let (stream_path, annotation_path) = sibling_paths(&manifest_path);
        fs::write(&manifest_path, self.manifest.to_json()?)?;
        write_stream(&self.records, &self.manifest, &stream_path)?;
        write_annotations(
            BufWriter::new(File::create(annotation_path)?),
            &self.segments,
        )?;
        Ok(manifest_path)
    }

    pub fn feature_dim(&self) -> usize {
        self.manifest.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.manifest.num_classes
    }

    /// Segments that carry an action label.
    pub fn labeled_segments(&self) -> impl Iterator<Item = &LabelSegment> {
        self.segments.iter().filter(|s| !s.label.is_unknown())
    }

    /// Records covering `seg`, inclusive on both ends.
    pub fn segment_records(&self, seg: &LabelSegment) -> &[FrameRecord] {
        &self.records[seg.start_frame as usize..=seg.stop_frame as usize]
    }
}

/// Stream and annotation paths paired with a manifest path.
pub fn sibling_paths(manifest_path: &Path) -> (PathBuf, PathBuf) {
    (
        manifest_path.with_extension("egws"),
        manifest_path.with_extension("csv"),
    )
}
