//! Boundary localization: a fixed-period reset (SBL) and the feature
//! anomaly detector (DBL) that flags an action change when the incoming
//! embedding drifts too far from the current segment's reference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::FrameRecord;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    /// Mean squared error over feature components.
    #[default]
    Mse,
    /// `1 - cos(f, r)`, defined as 1 when either vector is zero.
    CosineDistance,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    /// Running mean of the features since the last reset.
    #[default]
    SegmentMean,
    /// The previous frame's feature.
    PreviousFrame,
}

pub const DEFAULT_WARMUP: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DblConfig {
    pub threshold: f64,
    #[serde(default)]
    pub metric: DistanceMetric,
    #[serde(default)]
    pub reference: ReferenceMode,
    #[serde(default = "default_warmup")]
    pub warmup: u64,
}

fn default_warmup() -> u64 {
    DEFAULT_WARMUP
}

impl DblConfig {
    pub fn new(threshold: f64) -> Self {
        Self {
            threshold,
            metric: DistanceMetric::Mse,
            reference: ReferenceMode::SegmentMean,
            warmup: DEFAULT_WARMUP,
        }
    }

    pub fn with_warmup(mut self, warmup: u64) -> Self {
        self.warmup = warmup;
        self
    }

    pub fn with_metric(mut self, metric: DistanceMetric) -> Self {
        self.metric = metric;
        self
    }

    pub fn with_reference(mut self, reference: ReferenceMode) -> Self {
        self.reference = reference;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "DBL threshold must be a positive number, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Distance between a feature and a reference vector.
pub fn distance(metric: DistanceMetric, feature: &[f32], reference: &[f64]) -> Result<f64> {
    if feature.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            what: "feature",
            expected: reference.len(),
            got: feature.len(),
        });
    }
    Ok(match metric {
        DistanceMetric::Mse => {
            let sum: f64 = feature
                .iter()
                .zip(reference)
                .map(|(&f, &r)| {
                    let d = f64::from(f) - r;
                    d * d
                })
                .sum();
            sum / feature.len() as f64
        }
        DistanceMetric::CosineDistance => {
            let (mut dot, mut ff, mut rr) = (0.0, 0.0, 0.0);
            for (&f, &r) in feature.iter().zip(reference) {
                let f = f64::from(f);
                dot += f * r;
                ff += f * f;
                rr += r * r;
            }
            if ff == 0.0 || rr == 0.0 {
                1.0
            } else {
                (1.0 - dot / (ff.sqrt() * rr.sqrt())).max(0.0)
            }
        }
    })
}

/// Per-stream state of the dynamic boundary detector.
#[derive(Debug, Clone, PartialEq)]
pub struct DblState {
    config: DblConfig,
    reference: Vec<f64>,
    /// Frames folded into `reference`; zero before the first frame.
    ref_count: u64,
    frames_since_reset: u64,
    armed: bool,
}

impl DblState {
    pub fn new(config: DblConfig, feature_dim: usize) -> Self {
        Self::with_armed(config, feature_dim, true)
    }

    pub fn with_armed(config: DblConfig, feature_dim: usize, armed: bool) -> Self {
        Self {
            config,
            reference: vec![0.0; feature_dim],
            ref_count: 0,
            frames_since_reset: 0,
            armed,
        }
    }

    pub fn config(&self) -> &DblConfig {
        &self.config
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn frames_since_reset(&self) -> u64 {
        self.frames_since_reset
    }

    pub fn is_armed(&self) -> bool {
        self.armed
    }

    pub fn disarm(&mut self) {
        self.armed = false;
    }

    /// Arms the detector with an externally supplied reference, typically
    /// the feature mean of the aggregator this detector guards.
    pub fn arm_with_reference(&mut self, reference: &[f64], count: u64) {
        self.reference.copy_from_slice(reference);
        self.ref_count = count;
        self.armed = true;
    }

    /// Distance of `feature` to the current reference, without updating.
    pub fn score(&self, feature: &[f32]) -> Result<f64> {
        distance(self.config.metric, feature, &self.reference)
    }

    /// Starts a new segment seeded with `feature`.
    pub fn reset_with(&mut self, feature: &[f32]) {
        for (r, &f) in self.reference.iter_mut().zip(feature) {
            *r = f64::from(f);
        }
        self.ref_count = 1;
        self.frames_since_reset = 0;
    }

    /// Processes one frame; returns `true` when an anomaly fires.
    ///
    /// On an anomaly the current frame seeds the new segment's reference.
    pub fn step(&mut self, record: &FrameRecord) -> Result<bool> {
        let feature = &record.feature;
        if feature.len() != self.reference.len() {
            return Err(Error::DimensionMismatch {
                what: "feature",
                expected: self.reference.len(),
                got: feature.len(),
            });
        }
        if self.ref_count == 0 {
            self.reset_with(feature);
            return Ok(false);
        }
        if self.armed && self.frames_since_reset >= self.config.warmup {
            let d = self.score(feature)?;
            if d > self.config.threshold {
                self.reset_with(feature);
                return Ok(true);
            }
        }
        match self.config.reference {
            ReferenceMode::SegmentMean => {
                self.ref_count += 1;
                let inv = 1.0 / self.ref_count as f64;
                for (r, &f) in self.reference.iter_mut().zip(feature) {
                    *r += (f64::from(f) - *r) * inv;
                }
            }
            ReferenceMode::PreviousFrame => {
                for (r, &f) in self.reference.iter_mut().zip(feature) {
                    *r = f64::from(f);
                }
                self.ref_count += 1;
            }
        }
        self.frames_since_reset += 1;
        Ok(false)
    }
}

/// Advances the static-boundary counter; `true` means reset on this frame.
pub fn sbl_step(counter: u64, k: u64) -> (u64, bool) {
    let next = (counter + 1) % k.max(1);
    (next, next == 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SblConfig {
    pub k: u64,
}

impl SblConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig(
                "SBL period k must be at least 1".into(),
            ));
        }
        Ok(())
    }
}
