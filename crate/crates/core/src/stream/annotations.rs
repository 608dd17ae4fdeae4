//! Annotation CSV: `video_id,start_frame,stop_frame,label`.
//!
//! Frames are 0-based, `stop_frame` is inclusive, label `-1` marks an
//! unknown (background) interval.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Class index, or the unknown/background marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Action(usize),
    Unknown,
}

impl Label {
    const UNKNOWN_CODE: i64 = -1;

    pub fn class(self) -> Option<usize> {
        match self {
            Label::Action(c) => Some(c),
            Label::Unknown => None,
        }
    }

    pub fn is_unknown(self) -> bool {
        self == Label::Unknown
    }

    fn code(self) -> i64 {
        match self {
            Label::Action(c) => c as i64,
            Label::Unknown => Self::UNKNOWN_CODE,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i64(self.code())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let code = i64::deserialize(d)?;
        match code {
            Label::UNKNOWN_CODE => Ok(Label::Unknown),
            c if c >= 0 => Ok(Label::Action(c as usize)),
            c => Err(serde::de::Error::custom(format!("invalid label {c}"))),
        }
    }
}

/// One annotated interval of a video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSegment {
    pub video_id: String,
    pub start_frame: u64,
    pub stop_frame: u64,
    pub label: Label,
}

impl LabelSegment {
    pub fn new(
        video_id: impl Into<String>,
        start_frame: u64,
        stop_frame: u64,
        label: Label,
    ) -> Self {
        Self {
            video_id: video_id.into(),
            start_frame,
            stop_frame,
            label,
        }
    }

    /// Number of frames covered, endpoints included.
    pub fn len(&self) -> u64 {
        self.stop_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, frame: u64) -> bool {
        (self.start_frame..=self.stop_frame).contains(&frame)
    }

    pub fn overlaps(&self, other: &LabelSegment) -> bool {
        self.start_frame <= other.stop_frame && other.start_frame <= self.stop_frame
    }
}

#[derive(Deserialize)]
struct Row {
    video_id: String,
    start_frame: u64,
    stop_frame: u64,
    label: i64,
}

/// Parses annotation CSV from any reader.
///
/// Output is sorted by `(start_frame, stop_frame)`; ties keep file order.
pub fn parse_annotations<R: Read>(reader: R, num_classes: usize) -> Result<Vec<LabelSegment>> {
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    let expected = ["video_id", "start_frame", "stop_frame", "label"];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::MalformedAnnotation {
            line: 1,
            reason: format!("expected header {}", expected.join(",")),
        });
    }

    let mut rows: Vec<(u64, LabelSegment)> = Vec::new();
    for result in csv.records() {
        let record = result?;
        let line = record.position().map_or(0, |p| p.line());
        let row: Row =
            record
                .deserialize(Some(&headers))
                .map_err(|e| Error::MalformedAnnotation {
                    line,
                    reason: e.to_string(),
                })?;
        let fail = |reason: String| Error::MalformedAnnotation { line, reason };
        if row.stop_frame < row.start_frame {
            return Err(fail(format!(
                "stop_frame {} precedes start_frame {}",
                row.stop_frame, row.start_frame
            )));
        }
        let label = match row.label {
            -1 => Label::Unknown,
            c if c >= 0 && (c as usize) < num_classes => Label::Action(c as usize),
            c => {
                return Err(fail(format!(
                    "label {c} outside [0, {num_classes}) and not -1"
                )))
            }
        };
        rows.push((
            line,
            LabelSegment::new(row.video_id, row.start_frame, row.stop_frame, label),
        ));
    }

    rows.sort_by_key(|(_, s)| (s.start_frame, s.stop_frame));
    check_unknown_overlap(&rows)?;
    Ok(rows.into_iter().map(|(_, s)| s).collect())
}

/// Unknown intervals may not intersect labeled ones within a video.
fn check_unknown_overlap(rows: &[(u64, LabelSegment)]) -> Result<()> {
    // Per video: furthest stop seen so far among labeled and unknown rows.
    let mut reach: BTreeMap<&str, (Option<u64>, Option<u64>)> = BTreeMap::new();
    for (line, seg) in rows {
        let (labeled, unknown) = reach.entry(seg.video_id.as_str()).or_default();
        let other = if seg.label.is_unknown() {
            *labeled
        } else {
            *unknown
        };
        if other.is_some_and(|stop| stop >= seg.start_frame) {
            return Err(Error::MalformedAnnotation {
                line: *line,
                reason: format!(
                    "unknown and labeled intervals overlap in {} near frame {}",
                    seg.video_id, seg.start_frame
                ),
            });
        }
        let mine = if seg.label.is_unknown() {
            unknown
        } else {
            labeled
        };
        *mine = Some(mine.map_or(seg.stop_frame, |s| s.max(seg.stop_frame)));
    }
    Ok(())
}

pub fn load_annotations(path: impl AsRef<Path>, num_classes: usize) -> Result<Vec<LabelSegment>> {
    parse_annotations(File::open(path)?, num_classes)
}

pub fn write_annotations<W: Write>(writer: W, segments: &[LabelSegment]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for seg in segments {
        csv.serialize(seg)?;
    }
    csv.flush()?;
    Ok(())
}
