//! Deterministic synthetic streams with exact ground truth.
//!
//! Each class owns a unit-norm centroid. Frames inside an action carry the
//! centroid plus Gaussian noise as feature and a one-hot scaled by the
//! sharpness (plus a small fixed noise) as logits. Overlapping actions blend
//! linearly from one centroid to the next, and unknown gaps are pure noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::{FrameRecord, Label, LabelSegment, StreamDataset, StreamManifest};

/// Standard deviation of the logit noise inside actions.
pub const ACTION_LOGIT_NOISE: f64 = 0.1;
/// Standard deviation of the logits inside unknown gaps.
pub const UNKNOWN_LOGIT_NOISE: f64 = 0.5;
/// Upper bound on pairwise cosine similarity of sampled centroids.
pub const MAX_CENTROID_COSINE: f64 = 0.3;

const MAX_CENTROID_ATTEMPTS: usize = 100_000;
const CONTENT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LengthRange {
    pub min_frames: u64,
    pub max_frames: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Explicit unit-norm centroids; sampled from `seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_centroids: Option<Vec<Vec<f32>>>,
    pub within_action_noise: f64,
    pub logit_sharpness: f64,
    pub segment_length: LengthRange,
    pub overlap_fraction: f64,
    pub overlap_length: u64,
    pub unknown_gap_probability: f64,
    pub unknown_noise: f64,
    pub seed: u64,
    #[serde(default = "default_video_id")]
    pub video_id: String,
    #[serde(default = "default_domain_id")]
    pub domain_id: String,
    #[serde(default = "default_fps")]
    pub fps: f64,
}

fn default_video_id() -> String {
    "synth".into()
}

fn default_domain_id() -> String {
    "D1".into()
}

fn default_fps() -> f64 {
    30.0
}

impl SynthConfig {
    /// Noise-free, non-overlapping configuration without gaps.
    pub fn new(num_classes: usize, feature_dim: usize) -> Self {
        Self {
            num_classes,
            feature_dim,
            class_centroids: None,
            within_action_noise: 0.0,
            logit_sharpness: 1.0,
            segment_length: LengthRange {
                min_frames: 60,
                max_frames: 180,
            },
            overlap_fraction: 0.0,
            overlap_length: 20,
            unknown_gap_probability: 0.0,
            unknown_noise: 0.0,
            seed: 0,
            video_id: default_video_id(),
            domain_id: default_domain_id(),
            fps: default_fps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_classes < 2 || self.feature_dim < 1 {
            return bad(format!(
                "need num_classes >= 2 and feature_dim >= 1, got {} and {}",
                self.num_classes, self.feature_dim
            ));
        }
        let non_negative = |v: f64| v.is_finite() && v >= 0.0;
        if !non_negative(self.within_action_noise) || !non_negative(self.unknown_noise) {
            return bad("noise levels must be finite and non-negative".into());
        }
        if !(self.logit_sharpness.is_finite() && self.logit_sharpness > 0.0) {
            return bad("logit_sharpness must be positive".into());
        }
        let LengthRange {
            min_frames,
            max_frames,
        } = self.segment_length;
        if min_frames < 1 || max_frames < min_frames {
            return bad(format!(
                "invalid segment length range [{min_frames}, {max_frames}]"
            ));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return bad("overlap_fraction must lie in [0, 1)".into());
        }
        if self.overlap_length < 1 || self.overlap_length >= min_frames {
            return bad(format!(
                "overlap_length must lie in [1, min_frames), got {}",
                self.overlap_length
            ));
        }
        if !(0.0..=1.0).contains(&self.unknown_gap_probability) {
            return bad("unknown_gap_probability must lie in [0, 1]".into());
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad("fps must be positive".into());
        }
        if let Some(centroids) = &self.class_centroids {
            validate_centroids(centroids, self.num_classes, self.feature_dim)?;
        }
        Ok(())
    }

    /// The configured centroids, or ones sampled from `seed`.
    pub fn centroids(&self) -> Result<Vec<Vec<f32>>> {
        match &self.class_centroids {
            Some(c) => Ok(c.clone()),
            None => sample_centroids(self.num_classes, self.feature_dim, self.seed),
        }
    }
}

fn validate_centroids(centroids: &[Vec<f32>], classes: usize, dim: usize) -> Result<()> {
    if centroids.len() != classes || centroids.iter().any(|c| c.len() != dim) {
        return Err(Error::InvalidConfig(format!(
            "expected {classes} centroids of dimension {dim}"
        )));
    }
    for c in centroids {
        let norm = c.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt();
        if !c.iter().all(|v| v.is_finite()) || (norm - 1.0).abs() > 1e-4 {
            return Err(Error::InvalidConfig(
                "centroids must be finite unit vectors".into(),
            ));
        }
    }
    for (i, a) in centroids.iter().enumerate() {
        if centroids[i + 1..].iter().any(|b| a == b) {
            return Err(Error::InvalidConfig(
                "centroids must be pairwise distinct".into(),
            ));
        }
    }
    Ok(())
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Random unit vectors with pairwise cosine similarity below
/// [`MAX_CENTROID_COSINE`], by rejection sampling.
pub fn sample_centroids(classes: usize, dim: usize, seed: u64) -> Result<Vec<Vec<f32>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accepted: Vec<Vec<f64>> = Vec::with_capacity(classes);
    let mut attempts = 0;
    while accepted.len() < classes {
        attempts += 1;
        if attempts > MAX_CENTROID_ATTEMPTS {
            return Err(Error::InvalidConfig(format!(
                "could not place {classes} separated centroids in {dim} dimensions"
            )));
        }
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-9 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        if accepted.iter().all(|a| cosine(a, &v) < MAX_CENTROID_COSINE) {
            accepted.push(v);
        }
    }
    Ok(accepted
        .into_iter()
        .map(|v| v.into_iter().map(|x| x as f32).collect())
        .collect())
}

#[derive(Debug, Clone, Copy)]
enum FrameKind {
    Action(usize),
    Blend { from: usize, to: usize, alpha: f64 },
    Unknown,
}

/// Generates a single video with `total_segments` action segments.
///
/// Unknown gaps are inserted between consecutive actions with
/// `unknown_gap_probability` and are not counted in `total_segments`.
/// Consecutive actions always have different labels.
pub fn generate(config: &SynthConfig, total_segments: usize) -> Result<StreamDataset> {
    config.validate()?;
    if total_segments == 0 {
        return Err(Error::InvalidConfig(
            "total_segments must be positive".into(),
        ));
    }
    let centroids = config.centroids()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ CONTENT_STREAM);
    let LengthRange {
        min_frames,
        max_frames,
    } = config.segment_length;
    let overlap = config.overlap_length;

    let mut segments: Vec<LabelSegment> = Vec::new();
    // (index into segments, overlap at its head) of the last action.
    let mut last_action: Option<(usize, u64)> = None;
    let mut cursor = 0u64;
    for k in 0..total_segments {
        let len = rng.random_range(min_frames..=max_frames);
        let label = match last_action.and_then(|(i, _)| segments[i].label.class()) {
            Some(prev) => {
                let c = rng.random_range(0..config.num_classes - 1);
                if c >= prev {
                    c + 1
                } else {
                    c
                }
            }
            None => rng.random_range(0..config.num_classes),
        };
        let mut head_overlap = 0;
        let start = match last_action {
            None => 0,
            Some(_) if k > 0 && rng.random_bool(config.unknown_gap_probability) => {
                let gap = rng.random_range(min_frames..=max_frames);
                segments.push(LabelSegment::new(
                    &config.video_id,
                    cursor,
                    cursor + gap - 1,
                    Label::Unknown,
                ));
                cursor += gap;
                cursor
            }
            Some((i, prev_head)) => {
                let prev = &segments[i];
                let wants = rng.random_bool(config.overlap_fraction);
                // Overlaps on both ends of an action must stay disjoint.
                if wants && prev.len() > prev_head + overlap {
                    head_overlap = overlap;
                    prev.stop_frame + 1 - overlap
                } else {
                    cursor
                }
            }
        };
        let stop = start + len - 1;
        segments.push(LabelSegment::new(
            &config.video_id,
            start,
            stop,
            Label::Action(label),
        ));
        last_action = Some((segments.len() - 1, head_overlap));
        cursor = stop + 1;
    }

    let num_frames = cursor;
    let mut kinds = vec![FrameKind::Unknown; num_frames as usize];
    let mut prev_action: Option<&LabelSegment> = None;
    for seg in &segments {
        let Some(c) = seg.label.class() else {
            continue;
        };
        for t in seg.start_frame..=seg.stop_frame {
            kinds[t as usize] = FrameKind::Action(c);
        }
        if let Some(prev) = prev_action.filter(|p| p.stop_frame >= seg.start_frame) {
            let from = prev.label.class().unwrap();
            let width = (prev.stop_frame - seg.start_frame + 1) as f64;
            for t in seg.start_frame..=prev.stop_frame {
                let alpha = (t - seg.start_frame + 1) as f64 / (width + 1.0);
                kinds[t as usize] = FrameKind::Blend { from, to: c, alpha };
            }
        }
        prev_action = Some(seg);
    }

    let d = config.feature_dim;
    let classes = config.num_classes;
    let beta = config.logit_sharpness;
    let mut records = Vec::with_capacity(kinds.len());
    for (t, kind) in kinds.iter().enumerate() {
        let mut feature = Vec::with_capacity(d);
        let mut logits = Vec::with_capacity(classes);
        match *kind {
            FrameKind::Action(c) => {
                for &m in &centroids[c] {
                    let z: f64 = rng.sample(StandardNormal);
                    feature.push((f64::from(m) + config.within_action_noise * z) as f32);
                }
                for k in 0..classes {
                    let z: f64 = rng.sample(StandardNormal);
                    let hot = if k == c { beta } else { 0.0 };
                    logits.push((hot + ACTION_LOGIT_NOISE * z) as f32);
                }
            }
            FrameKind::Blend { from, to, alpha } => {
                for (&a, &b) in centroids[from].iter().zip(&centroids[to]) {
                    let z: f64 = rng.sample(StandardNormal);
                    let mix = (1.0 - alpha) * f64::from(a) + alpha * f64::from(b);
                    feature.push((mix + config.within_action_noise * z) as f32);
                }
                for k in 0..classes {
                    let z: f64 = rng.sample(StandardNormal);
                    let weight = match k {
                        _ if k == from => 1.0 - alpha,
                        _ if k == to => alpha,
                        _ => 0.0,
                    };
                    logits.push((beta * weight + ACTION_LOGIT_NOISE * z) as f32);
                }
            }
            FrameKind::Unknown => {
                for _ in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    feature.push((config.unknown_noise * z) as f32);
                }
                for _ in 0..classes {
                    let z: f64 = rng.sample(StandardNormal);
                    logits.push((UNKNOWN_LOGIT_NOISE * z) as f32);
                }
            }
        }
        records.push(FrameRecord::new(t as u64, feature, logits));
    }

    let manifest = StreamManifest {
        video_id: config.video_id.clone(),
        domain_id: config.domain_id.clone(),
        fps: config.fps,
        num_frames,
        feature_dim: d,
        num_classes: classes,
        class_names: (0..classes).map(|c| format!("class_{c}")).collect(),
    };
    StreamDataset::new(manifest, records, segments)
}

/// Start frames of every segment except the first, in order.
pub fn oracle_boundaries(dataset: &StreamDataset) -> Vec<u64> {
    let mut starts: Vec<u64> = dataset.segments.iter().map(|s| s.start_frame).collect();
    starts.sort_unstable();
    starts.into_iter().skip(1).collect()
}

/// A set of videos spread over several domains that share class centroids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub base: SynthConfig,
    pub domains: Vec<String>,
    pub videos_per_domain: usize,
    pub segments_per_video: usize,
}

/// Generates `videos_per_domain` videos for each domain. Video ids are
/// `<domain>_<nnn>`; each video gets its own seed derived from the base.
pub fn generate_suite(suite: &SuiteConfig) -> Result<Vec<StreamDataset>> {
    if suite.domains.is_empty() || suite.videos_per_domain == 0 {
        return Err(Error::InvalidConfig(
            "suite needs at least one domain and one video per domain".into(),
        ));
    }
    suite.base.validate()?;
    let centroids = suite.base.centroids()?;
    let mut out = Vec::new();
    for (di, domain) in suite.domains.iter().enumerate() {
        for vi in 0..suite.videos_per_domain {
            let mut cfg = suite.base.clone();
            cfg.class_centroids = Some(centroids.clone());
            cfg.domain_id = domain.clone();
            cfg.video_id = format!("{domain}_{vi:03}");
            cfg.seed = video_seed(suite.base.seed, di as u64, vi as u64);
            out.push(generate(&cfg, suite.segments_per_video)?);
        }
    }
    Ok(out)
}

fn video_seed(base: u64, domain: u64, video: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(domain.wrapping_mul(1 << 32).wrapping_add(video) + 1);
    rng.random()
}
