//! Online first-person action recognition over per-frame feature/logit
//! streams.
//!
//! The pipeline consumes one [`stream::FrameRecord`] per sliding-window
//! position and turns it into action predictions under three protocols:
//! offline (clip sampling with known boundaries), streaming (frame-by-frame
//! aggregation reset at known boundaries) and online (no boundary
//! supervision; the pipeline localizes boundaries itself with a static
//! period, a feature anomaly detector, or the two-fold aggregator).

pub mod aggregate;
pub mod bench;
pub mod boundary;
pub mod error;
pub mod protocols;
pub mod stream;
pub mod synth;
pub mod twofold;

pub use error::{Error, Result};
