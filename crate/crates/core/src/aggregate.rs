//! Running aggregation of per-step classifier outputs, plus the offline
//! clip samplers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::FrameRecord;

/// Which per-step scores get accumulated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSpace {
    /// Raw logits (default).
    #[default]
    Logits,
    /// Softmax probabilities of each step's logits.
    Softmax,
}

/// Running accumulator of class scores and features since the last reset.
///
/// `logit_sum` holds the summed per-step scores and `feature_mean` the
/// incremental mean of the features; both are zero whenever `n == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatorState {
    logit_sum: Vec<f64>,
    feature_mean: Vec<f64>,
    n: u64,
    space: ScoreSpace,
}

impl AggregatorState {
    pub fn new(feature_dim: usize, num_classes: usize) -> Self {
        Self::with_space(feature_dim, num_classes, ScoreSpace::Logits)
    }

    pub fn with_space(feature_dim: usize, num_classes: usize, space: ScoreSpace) -> Self {
        Self {
            logit_sum: vec![0.0; num_classes],
            feature_mean: vec![0.0; feature_dim],
            n: 0,
            space,
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn logit_sum(&self) -> &[f64] {
        &self.logit_sum
    }

    pub fn feature_mean(&self) -> &[f64] {
        &self.feature_mean
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_mean.len()
    }

    pub fn num_classes(&self) -> usize {
        self.logit_sum.len()
    }

    pub fn space(&self) -> ScoreSpace {
        self.space
    }

    pub fn check_dims(&self, record: &FrameRecord) -> Result<()> {
        if record.feature.len() != self.feature_mean.len() {
            return Err(Error::DimensionMismatch {
                what: "feature",
                expected: self.feature_mean.len(),
                got: record.feature.len(),
            });
        }
        if record.logits.len() != self.logit_sum.len() {
            return Err(Error::DimensionMismatch {
                what: "logits",
                expected: self.logit_sum.len(),
                got: record.logits.len(),
            });
        }
        Ok(())
    }

    /// Accumulates one step.
    pub fn push(&mut self, record: &FrameRecord) -> Result<()> {
        self.check_dims(record)?;
        self.n += 1;
        match self.space {
            ScoreSpace::Logits => {
                for (acc, &l) in self.logit_sum.iter_mut().zip(&record.logits) {
                    *acc += f64::from(l);
                }
            }
            ScoreSpace::Softmax => {
                let max = record
                    .logits
                    .iter()
                    .fold(f64::NEG_INFINITY, |m, &l| m.max(f64::from(l)));
                let z: f64 = record
                    .logits
                    .iter()
                    .map(|&l| (f64::from(l) - max).exp())
                    .sum();
                for (acc, &l) in self.logit_sum.iter_mut().zip(&record.logits) {
                    *acc += (f64::from(l) - max).exp() / z;
                }
            }
        }
        let inv = 1.0 / self.n as f64;
        for (mean, &f) in self.feature_mean.iter_mut().zip(&record.feature) {
            *mean += (f64::from(f) - *mean) * inv;
        }
        Ok(())
    }

    /// Average score vector, or [`Error::NoPrediction`] when empty.
    pub fn output(&self) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.logit_sum.len()];
        self.output_into(&mut out)?;
        Ok(out)
    }

    pub fn output_into(&self, out: &mut [f64]) -> Result<()> {
        if self.n == 0 {
            return Err(Error::NoPrediction);
        }
        let n = self.n as f64;
        for (o, &s) in out.iter_mut().zip(&self.logit_sum) {
            *o = s / n;
        }
        Ok(())
    }

    /// Argmax of the average scores.
    pub fn predict(&self) -> Result<usize> {
        if self.n == 0 {
            return Err(Error::NoPrediction);
        }
        // Division by a positive n preserves the argmax.
        Ok(argmax(&self.logit_sum))
    }

    /// Clears the accumulator ("cleaning").
    pub fn reset(&mut self) {
        self.n = 0;
        self.logit_sum.fill(0.0);
        self.feature_mean.fill(0.0);
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// `frames_per_clip` equidistant frames spread over the whole range.
    Uniform,
    /// `frames_per_clip` contiguous frames.
    Dense,
    /// Dense clips whose length is the whole range (`frames_per_clip` is
    /// taken to be the segment length).
    DenseFull,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub kind: SamplerKind,
    pub frames_per_clip: usize,
    pub num_clips: usize,
}

impl SamplerSpec {
    pub fn uniform(frames_per_clip: usize, num_clips: usize) -> Self {
        Self {
            kind: SamplerKind::Uniform,
            frames_per_clip,
            num_clips,
        }
    }

    /// One dense clip covering the whole segment.
    pub fn dense_full() -> Self {
        Self {
            kind: SamplerKind::DenseFull,
            frames_per_clip: 1,
            num_clips: 1,
        }
    }

    pub fn dense(frames_per_clip: usize, num_clips: usize) -> Self {
        Self {
            kind: SamplerKind::Dense,
            frames_per_clip,
            num_clips,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames_per_clip == 0 || self.num_clips == 0 {
            return Err(Error::InvalidConfig(format!(
                "sampler needs frames_per_clip >= 1 and num_clips >= 1, got {} and {}",
                self.frames_per_clip, self.num_clips
            )));
        }
        Ok(())
    }
}

/// Frame indices (relative to the start of the range) for each clip.
///
/// Every clip has exactly `frames_per_clip` indices in `[0, num_frames)`
/// (full-window clips have `num_frames`).
/// Uniform clip `c` of `m` takes `floor((j*m + c)*(N-1) / ((T-1)*m))`, so
/// the first clip includes both endpoints and later clips are shifted by a
/// fraction of the stride. Dense clips start at equidistant offsets over
/// `[0, N-T]` (centred when `m == 1`). Short ranges repeat the last frame.
pub fn sample_indices(spec: &SamplerSpec, num_frames: usize) -> Vec<Vec<usize>> {
    let t = spec.frames_per_clip.max(1);
    let m = spec.num_clips.max(1);
    let n = num_frames.max(1);
    let last = n - 1;
    (0..m)
        .map(|c| match spec.kind {
            SamplerKind::Uniform if t == 1 => vec![((2 * c + 1) * last) / (2 * m)],
            SamplerKind::Uniform => (0..t)
                .map(|j| (((j * m + c) * last) / ((t - 1) * m)).min(last))
                .collect(),
            SamplerKind::Dense => {
                let span = n.saturating_sub(t);
                let start = if m == 1 { span / 2 } else { c * span / (m - 1) };
                (0..t).map(|j| (start + j).min(last)).collect()
            }
            SamplerKind::DenseFull => (0..n).collect(),
        })
        .collect()
}
