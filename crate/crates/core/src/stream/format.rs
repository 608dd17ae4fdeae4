//! Little-endian binary stream format.
//!
//! ```text
//! header:  "EGWS" | u16 version | u32 feature_dim | u32 num_classes | u64 num_frames
//! record:  u64 frame_index | feature_dim x f32 | num_classes x f32
//! ```
//!
//! Readers decode one record at a time into a caller-owned buffer, so memory
//! use does not depend on the stream length.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use super::{FrameRecord, StreamManifest};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"EGWS";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHeader {
    pub version: u16,
    pub feature_dim: u32,
    pub num_classes: u32,
    pub num_frames: u64,
}

impl StreamHeader {
    pub fn for_manifest(manifest: &StreamManifest) -> Self {
        Self {
            version: VERSION,
            feature_dim: manifest.feature_dim as u32,
            num_classes: manifest.num_classes as u32,
            num_frames: manifest.num_frames,
        }
    }

    pub fn record_len(&self) -> usize {
        8 + 4 * (self.feature_dim as usize + self.num_classes as usize)
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..6].copy_from_slice(&self.version.to_le_bytes());
        out[6..10].copy_from_slice(&self.feature_dim.to_le_bytes());
        out[10..14].copy_from_slice(&self.num_classes.to_le_bytes());
        out[14..22].copy_from_slice(&self.num_frames.to_le_bytes());
        out
    }

    pub fn parse(bytes: &[u8; HEADER_LEN]) -> Result<Self> {
        if bytes[0..4] != MAGIC {
            return Err(Error::FormatMismatch(format!(
                "bad magic {:?}, expected \"EGWS\"",
                String::from_utf8_lossy(&bytes[0..4])
            )));
        }
        let header = Self {
            version: u16::from_le_bytes([bytes[4], bytes[5]]),
            feature_dim: u32::from_le_bytes(bytes[6..10].try_into().unwrap()),
            num_classes: u32::from_le_bytes(bytes[10..14].try_into().unwrap()),
            num_frames: u64::from_le_bytes(bytes[14..22].try_into().unwrap()),
        };
        if header.version != VERSION {
            return Err(Error::FormatMismatch(format!(
                "unsupported version {}",
                header.version
            )));
        }
        if header.feature_dim == 0 || header.num_classes < 2 {
            return Err(Error::FormatMismatch(format!(
                "invalid dimensions D={} C={}",
                header.feature_dim, header.num_classes
            )));
        }
        Ok(header)
    }

    /// Checks that the header agrees with a manifest.
    pub fn check_manifest(&self, manifest: &StreamManifest) -> Result<()> {
        let expected = Self::for_manifest(manifest);
        if (self.feature_dim, self.num_classes, self.num_frames)
            != (
                expected.feature_dim,
                expected.num_classes,
                expected.num_frames,
            )
        {
            return Err(Error::FormatMismatch(format!(
                "header (D={}, C={}, frames={}) disagrees with manifest (D={}, C={}, frames={})",
                self.feature_dim,
                self.num_classes,
                self.num_frames,
                expected.feature_dim,
                expected.num_classes,
                expected.num_frames
            )));
        }
        Ok(())
    }
}

/// Forward-only decoder over a stream file.
pub struct StreamReader<R> {
    inner: R,
    header: StreamHeader,
    read: u64,
    scratch: Vec<u8>,
    finished: bool,
}

impl StreamReader<BufReader<File>> {
    /// Opens a stream file without a manifest (header validation only).
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> StreamReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut bytes = [0u8; HEADER_LEN];
        inner.read_exact(&mut bytes).map_err(|e| match e.kind() {
            ErrorKind::UnexpectedEof => {
                Error::FormatMismatch("file shorter than the stream header".into())
            }
            _ => Error::Io(e),
        })?;
        let header = StreamHeader::parse(&bytes)?;
        let scratch = vec![0u8; header.record_len()];
        Ok(Self {
            inner,
            header,
            read: 0,
            scratch,
            finished: false,
        })
    }

    pub fn header(&self) -> StreamHeader {
        self.header
    }

    pub fn records_read(&self) -> u64 {
        self.read
    }

    /// Decodes the next record into `record`, reusing its buffers.
    ///
    /// Returns `Ok(false)` once all `num_frames` records have been consumed.
    pub fn read_into(&mut self, record: &mut FrameRecord) -> Result<bool> {
        if self.read == self.header.num_frames {
            if !self.finished {
                self.finished = true;
                self.check_trailing()?;
            }
            return Ok(false);
        }
        if let Err(e) = self.inner.read_exact(&mut self.scratch) {
            return Err(match e.kind() {
                ErrorKind::UnexpectedEof => Error::TruncatedStream {
                    expected: self.header.num_frames,
                    got: self.read,
                },
                _ => Error::Io(e),
            });
        }
        let d = self.header.feature_dim as usize;
        let c = self.header.num_classes as usize;
        let frame_index = u64::from_le_bytes(self.scratch[0..8].try_into().unwrap());
        if frame_index != self.read {
            return Err(Error::FrameIndexGap {
                expected: self.read,
                found: frame_index,
            });
        }
        record.frame_index = frame_index;
        decode_f32s(&self.scratch[8..8 + 4 * d], &mut record.feature);
        decode_f32s(&self.scratch[8 + 4 * d..], &mut record.logits);
        debug_assert_eq!(record.logits.len(), c);
        if !record.is_finite() {
            return Err(Error::NonFiniteValue { frame_index });
        }
        self.read += 1;
        Ok(true)
    }

    fn check_trailing(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        loop {
            match self.inner.read(&mut probe) {
                Ok(0) => return Ok(()),
                Ok(_) => {
                    return Err(Error::FormatMismatch(format!(
                        "trailing bytes after {} records",
                        self.header.num_frames
                    )))
                }
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) => return Err(Error::Io(e)),
            }
        }
    }
}

impl<R: Read> Iterator for StreamReader<R> {
    type Item = Result<FrameRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut record = FrameRecord::zeroed(
            self.header.feature_dim as usize,
            self.header.num_classes as usize,
        );
        match self.read_into(&mut record) {
            Ok(true) => Some(Ok(record)),
            Ok(false) => None,
            Err(e) => {
                // Stop after the first error.
                self.read = self.header.num_frames;
                self.finished = true;
                Some(Err(e))
            }
        }
    }
}

fn decode_f32s(bytes: &[u8], out: &mut Vec<f32>) {
    out.clear();
    out.extend(
        bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
    );
}

/// Opens a stream file and checks its header against `manifest`.
pub fn open_stream(
    path: impl AsRef<Path>,
    manifest: &StreamManifest,
) -> Result<StreamReader<BufReader<File>>> {
    let reader = StreamReader::open(path)?;
    reader.header().check_manifest(manifest)?;
    Ok(reader)
}

/// Encoder that enforces the record invariants while writing.
pub struct StreamWriter<W: Write> {
    inner: W,
    header: StreamHeader,
    written: u64,
    scratch: Vec<u8>,
}

impl<W: Write> StreamWriter<W> {
    pub fn new(mut inner: W, header: StreamHeader) -> Result<Self> {
        inner.write_all(&header.to_bytes())?;
        let scratch = Vec::with_capacity(header.record_len());
        Ok(Self {
            inner,
            header,
            written: 0,
            scratch,
        })
    }

    pub fn write_record(&mut self, record: &FrameRecord) -> Result<()> {
        let d = self.header.feature_dim as usize;
        let c = self.header.num_classes as usize;
        if record.feature.len() != d {
            return Err(Error::DimensionMismatch {
                what: "feature",
                expected: d,
                got: record.feature.len(),
            });
        }
        if record.logits.len() != c {
            return Err(Error::DimensionMismatch {
                what: "logits",
                expected: c,
                got: record.logits.len(),
            });
        }
        if self.written == self.header.num_frames {
            return Err(Error::DimensionMismatch {
                what: "record count",
                expected: self.header.num_frames as usize,
                got: self.written as usize + 1,
            });
        }
        if record.frame_index != self.written {
            return Err(Error::FrameIndexGap {
                expected: self.written,
                found: record.frame_index,
            });
        }
        if !record.is_finite() {
            return Err(Error::NonFiniteValue {
                frame_index: record.frame_index,
            });
        }
        self.scratch.clear();
        self.scratch
            .extend_from_slice(&record.frame_index.to_le_bytes());
        for v in record.feature.iter().chain(&record.logits) {
            self.scratch.extend_from_slice(&v.to_le_bytes());
        }
        self.inner.write_all(&self.scratch)?;
        self.written += 1;
        Ok(())
    }

    /// Flushes and checks that exactly `num_frames` records were written.
    pub fn finish(mut self) -> Result<W> {
        if self.written != self.header.num_frames {
            return Err(Error::DimensionMismatch {
                what: "record count",
                expected: self.header.num_frames as usize,
                got: self.written as usize,
            });
        }
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Writes `records` to `path` in the stream format described by `manifest`.
pub fn write_stream<'a, I>(
    records: I,
    manifest: &StreamManifest,
    path: impl AsRef<Path>,
) -> Result<()>
where
    I: IntoIterator<Item = &'a FrameRecord>,
{
    let file = BufWriter::new(File::create(path)?);
    let mut writer = StreamWriter::new(file, StreamHeader::for_manifest(manifest))?;
    for record in records {
        writer.write_record(record)?;
    }
    writer
        .finish()?
        .into_inner()
        .map_err(|e| Error::Io(io::Error::other(e.to_string())))?;
    Ok(())
}

/// Encodes records into an in-memory buffer.
pub fn encode_to_vec<'a, I>(records: I, header: StreamHeader) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = &'a FrameRecord>,
{
    let mut writer = StreamWriter::new(Vec::new(), header)?;
    for record in records {
        writer.write_record(record)?;
    }
    writer.finish()
}
