//! Throughput and per-frame latency of the post-backbone pipeline.
//!
//! The backbone is not part of this crate, so the measured loop covers what
//! runs after it: boundary localization, aggregation and the per-frame
//! prediction readout. Input comes from a pre-generated in-memory pool of
//! synthetic records that is cycled, so the loop itself never allocates.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::aggregate::ScoreSpace;
use crate::boundary::DblConfig;
use crate::error::{Error, Result};
use crate::protocols::{BoundaryStrategy, OnlinePipeline};
use crate::stream::FrameRecord;
use crate::synth::{generate, LengthRange, SynthConfig};
use crate::twofold::DEFAULT_DELTA;

/// Real-time budget the benchmark is compared against.
pub const REALTIME_FPS: f64 = 30.0;

const POOL_SEGMENTS: usize = 24;
const SBL_PERIOD: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchStrategy {
    /// One aggregator with the anomaly detector.
    Single,
    /// Two-fold aggregator.
    A2,
    /// One aggregator with a fixed reset period.
    Sbl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub strategy: BenchStrategy,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub num_frames: u64,
    pub warmup_frames: u64,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(
        strategy: BenchStrategy,
        feature_dim: usize,
        num_classes: usize,
        num_frames: u64,
    ) -> Self {
        Self {
            strategy,
            feature_dim,
            num_classes,
            num_frames,
            warmup_frames: 1_000,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "need feature_dim >= 1 and num_classes >= 2, got {} and {}",
                self.feature_dim, self.num_classes
            )));
        }
        if self.num_frames < self.warmup_frames + 1_000 {
            return Err(Error::InvalidConfig(format!(
                "num_frames ({}) must be at least warmup_frames + 1000 ({})",
                self.num_frames,
                self.warmup_frames + 1_000
            )));
        }
        Ok(())
    }

    /// Threshold between the within-action spread and the centroid gap of
    /// the pool generator.
    fn threshold(&self) -> f64 {
        0.7 / self.feature_dim as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub strategy: BenchStrategy,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub warmup_frames: u64,
    pub frames_processed: u64,
    pub wall_time_s: f64,
    pub throughput_fps: f64,
    pub latency_p50_us: f64,
    pub latency_p99_us: f64,
    /// Throughput as a multiple of the real-time frame rate.
    pub realtime_factor: f64,
    pub boundary_events: u64,
}

/// Pipeline plus input pool; [`BenchHarness::step`] processes one frame.
pub struct BenchHarness {
    pool: Vec<FrameRecord>,
    pipeline: OnlinePipeline,
    out: Vec<f64>,
    cursor: usize,
    events: u64,
}

impl BenchHarness {
    pub fn new(config: &BenchConfig) -> Result<Self> {
        config.validate()?;
        let threshold = config.threshold();
        let synth = SynthConfig {
            seed: config.seed,
            // Within-action MSE is sigma^2, an eighth of the threshold.
            within_action_noise: (threshold / 8.0).sqrt(),
            logit_sharpness: 2.0,
            segment_length: LengthRange {
                min_frames: 60,
                max_frames: 180,
            },
            ..SynthConfig::new(config.num_classes, config.feature_dim)
        };
        let pool = generate(&synth, POOL_SEGMENTS)?.records;
        let dbl = DblConfig::new(threshold);
        let strategy = match config.strategy {
            BenchStrategy::Single => BoundaryStrategy::Dbl { dbl },
            BenchStrategy::A2 => BoundaryStrategy::A2 {
                dbl,
                delta: DEFAULT_DELTA,
            },
            BenchStrategy::Sbl => BoundaryStrategy::Sbl { k: SBL_PERIOD },
        };
        let pipeline = OnlinePipeline::new(
            &strategy,
            "bench",
            config.feature_dim,
            config.num_classes,
            ScoreSpace::Logits,
        )?;
        Ok(Self {
            pool,
            pipeline,
            out: vec![0.0; config.num_classes],
            cursor: 0,
            events: 0,
        })
    }

    /// Steps the pipeline on the next pooled record and reads the output.
    #[inline]
    pub fn step(&mut self) -> Result<()> {
        let record = &self.pool[self.cursor];
        self.cursor = (self.cursor + 1) % self.pool.len();
        if self.pipeline.step(record)?.is_some() {
            self.events += 1;
        }
        self.pipeline.output_into(&mut self.out)
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn output(&self) -> &[f64] {
        &self.out
    }
}

fn percentile(sorted: &[u64], q: f64) -> u64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Runs the step loop over `num_frames` frames; the first `warmup_frames`
/// are excluded from every statistic.
pub fn bench_pipeline(config: &BenchConfig) -> Result<BenchReport> {
    let mut harness = BenchHarness::new(config)?;
    for _ in 0..config.warmup_frames {
        harness.step()?;
    }
    let warm_events = harness.events();
    let measured = config.num_frames - config.warmup_frames;
    let mut latencies = Vec::with_capacity(measured as usize);
    let start = Instant::now();
    for _ in 0..measured {
        let t0 = Instant::now();
        harness.step()?;
        latencies.push(t0.elapsed().as_nanos() as u64);
    }
    let wall = start.elapsed().as_secs_f64();
    latencies.sort_unstable();
    let throughput = measured as f64 / wall;
    Ok(BenchReport {
        strategy: config.strategy,
        feature_dim: config.feature_dim,
        num_classes: config.num_classes,
        warmup_frames: config.warmup_frames,
        frames_processed: measured,
        wall_time_s: wall,
        throughput_fps: throughput,
        latency_p50_us: percentile(&latencies, 0.50) as f64 / 1e3,
        latency_p99_us: percentile(&latencies, 0.99) as f64 / 1e3,
        realtime_factor: throughput / REALTIME_FPS,
        boundary_events: harness.events() - warm_events,
    })
}
