//! Two-fold aggregator: two aggregators that reset asynchronously.
//!
//! Only one detector is armed at a time. When it fires, its aggregator is
//! flushed and starts encoding the new action from the current frame, while
//! the other aggregator keeps the previous action's context. The other
//! detector is armed `delta` frames later, seeded from its own aggregator's
//! feature mean. The prediction combines both aggregators weighted by the
//! number of frames each holds, `O = n1 * A1 + n2 * A2`.

use serde::{Deserialize, Serialize};

use crate::aggregate::{argmax, AggregatorState, ScoreSpace};
use crate::boundary::{DblConfig, DblState};
use crate::error::{Error, Result};
use crate::stream::FrameRecord;

/// Default hand-off delay, in frames at 30 fps.
pub const DEFAULT_DELTA: u64 = 20;

/// A reset of one aggregator at a given frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryEvent {
    pub frame_index: u64,
    /// Which aggregator was flushed (always 0 for single-aggregator runs).
    pub aggregator: u8,
}

#[derive(Debug, Clone)]
pub struct TwoFoldState {
    aggs: [AggregatorState; 2],
    dbls: [DblState; 2],
    armed: Option<usize>,
    /// Aggregator whose detector arms next, and frames left until it does.
    pending: Option<(usize, u64)>,
    delta: u64,
}

impl TwoFoldState {
    pub fn new(
        config: DblConfig,
        delta: u64,
        feature_dim: usize,
        num_classes: usize,
    ) -> Result<Self> {
        Self::with_space(config, delta, feature_dim, num_classes, ScoreSpace::Logits)
    }

    pub fn with_space(
        config: DblConfig,
        delta: u64,
        feature_dim: usize,
        num_classes: usize,
        space: ScoreSpace,
    ) -> Result<Self> {
        config.validate()?;
        if delta == 0 {
            return Err(Error::InvalidConfig(
                "delta must be at least 1 frame".into(),
            ));
        }
        let agg = AggregatorState::with_space(feature_dim, num_classes, space);
        Ok(Self {
            aggs: [agg.clone(), agg],
            dbls: [
                DblState::with_armed(config, feature_dim, true),
                DblState::with_armed(config, feature_dim, false),
            ],
            armed: Some(0),
            pending: None,
            delta,
        })
    }

    pub fn aggregators(&self) -> &[AggregatorState; 2] {
        &self.aggs
    }

    pub fn detectors(&self) -> &[DblState; 2] {
        &self.dbls
    }

    pub fn armed_index(&self) -> Option<usize> {
        self.armed
    }

    pub fn pending_arm_countdown(&self) -> Option<u64> {
        self.pending.map(|(_, left)| left)
    }

    pub fn delta(&self) -> u64 {
        self.delta
    }

    /// Processes one frame. Returns the reset it caused, if any.
    pub fn step(&mut self, record: &FrameRecord) -> Result<Option<BoundaryEvent>> {
        self.aggs[0].check_dims(record)?;

        if let Some((target, left)) = self.pending {
            let left = left - 1;
            if left == 0 {
                let (mean, n) = (self.aggs[target].feature_mean(), self.aggs[target].n());
                self.dbls[target].arm_with_reference(mean, n);
                self.armed = Some(target);
                self.pending = None;
            } else {
                self.pending = Some((target, left));
            }
        }

        let mut fired = None;
        for (i, dbl) in self.dbls.iter_mut().enumerate() {
            if dbl.step(record)? {
                fired = Some(i);
            }
        }

        let event = fired.map(|i| {
            self.aggs[i].reset();
            self.dbls[i].disarm();
            self.armed = None;
            self.pending = Some((1 - i, self.delta));
            BoundaryEvent {
                frame_index: record.frame_index,
                aggregator: i as u8,
            }
        });

        for agg in &mut self.aggs {
            agg.push(record)?;
        }
        Ok(event)
    }

    /// Combined score vector `n1 * A1 + n2 * A2`.
    pub fn output(&self) -> Result<Vec<f64>> {
        combine_outputs(&self.aggs[0], &self.aggs[1])
    }

    pub fn output_into(&self, out: &mut [f64]) -> Result<()> {
        combine_outputs_into(&self.aggs[0], &self.aggs[1], out)
    }

    pub fn predict(&self) -> Result<usize> {
        Ok(argmax(&self.output()?))
    }
}

/// Frame-count weighted sum of two aggregator outputs; an empty
/// aggregator contributes nothing.
pub fn combine_outputs(a: &AggregatorState, b: &AggregatorState) -> Result<Vec<f64>> {
    let mut out = vec![0.0; a.num_classes()];
    combine_outputs_into(a, b, &mut out)?;
    Ok(out)
}

pub fn combine_outputs_into(
    a: &AggregatorState,
    b: &AggregatorState,
    out: &mut [f64],
) -> Result<()> {
    if a.is_empty() && b.is_empty() {
        return Err(Error::NoPrediction);
    }
    out.fill(0.0);
    for agg in [a, b] {
        if agg.is_empty() {
            continue;
        }
        let n = agg.n() as f64;
        for (o, &s) in out.iter_mut().zip(agg.logit_sum()) {
            *o += n * (s / n);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(i: u64, feature: Vec<f32>, logits: Vec<f32>) -> FrameRecord {
        FrameRecord::new(i, feature, logits)
    }

    /// 100 frames of one centroid followed by 100 of another.
    fn two_actions() -> Vec<FrameRecord> {
        (0..200u64)
            .map(|i| {
                if i < 100 {
                    frame(i, vec![1.0, 0.0, 0.0, 0.0], vec![2.0, 0.0])
                } else {
                    frame(i, vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 2.0])
                }
            })
            .collect()
    }

    fn run(state: &mut TwoFoldState, frames: &[FrameRecord]) -> Vec<BoundaryEvent> {
        frames
            .iter()
            .filter_map(|r| state.step(r).unwrap())
            .collect()
    }

    #[test]
    fn single_action_never_resets() {
        let mut s = TwoFoldState::new(DblConfig::new(1e6), 20, 4, 2).unwrap();
        let frames: Vec<_> = two_actions().into_iter().take(100).collect();
        assert!(run(&mut s, &frames).is_empty());
        let [a, b] = s.aggregators();
        assert_eq!(a, b);
        assert_eq!(a.n(), 100);
    }

    #[test]
    fn hand_off_produces_two_resets() {
        // Centroid MSE gap is 0.5; after 20 hand-off frames the surviving
        // aggregator's mean sits at MSE 0.5 * (100/120)^2 ~ 0.35.
        let cfg = DblConfig::new(0.1).with_warmup(0);
        let mut s = TwoFoldState::new(cfg, 20, 4, 2).unwrap();
        let events = run(&mut s, &two_actions());
        assert_eq!(
            events,
            vec![
                BoundaryEvent {
                    frame_index: 100,
                    aggregator: 0
                },
                BoundaryEvent {
                    frame_index: 120,
                    aggregator: 1
                },
            ]
        );
        assert_eq!(s.aggregators()[0].n(), 100);
        assert_eq!(s.aggregators()[1].n(), 80);
        // Aggregator 0 re-armed at frame 140 and stays quiet.
        assert_eq!(s.armed_index(), Some(0));
        assert_eq!(s.pending_arm_countdown(), None);
    }

    #[test]
    fn delay_separates_resets() {
        let cfg = DblConfig::new(0.1).with_warmup(0);
        for delta in [1, 50] {
            let mut s = TwoFoldState::new(cfg, delta, 4, 2).unwrap();
            let events = run(&mut s, &two_actions());
            assert_eq!(events.len(), 2, "delta {delta}");
            assert!(events[1].frame_index >= events[0].frame_index + delta);
            assert_ne!(events[0].aggregator, events[1].aggregator);
        }
    }

    #[test]
    fn hand_off_window_is_quiet() {
        let cfg = DblConfig::new(0.1).with_warmup(0);
        let mut s = TwoFoldState::new(cfg, 30, 4, 2).unwrap();
        let frames = two_actions();
        for r in &frames[..=100] {
            s.step(r).unwrap();
        }
        assert_eq!(s.armed_index(), None);
        assert_eq!(s.pending_arm_countdown(), Some(30));
        assert!(s.detectors().iter().all(|d| !d.is_armed()));
    }

    #[test]
    fn weighted_sum_example() {
        let mut a = AggregatorState::new(1, 2);
        for _ in 0..3 {
            a.push(&frame(0, vec![0.0], vec![1.0, 0.0])).unwrap();
        }
        let mut b = AggregatorState::new(1, 2);
        b.push(&frame(0, vec![0.0], vec![0.0, 1.0])).unwrap();
        let out = combine_outputs(&a, &b).unwrap();
        assert_eq!(out, vec![3.0, 1.0]);
        assert_eq!(argmax(&out), 0);
    }

    #[test]
    fn empty_term_is_zero() {
        let mut a = AggregatorState::new(1, 3);
        a.push(&frame(0, vec![0.0], vec![0.1, 0.7, 0.2])).unwrap();
        a.push(&frame(1, vec![0.0], vec![0.3, 0.1, 0.2])).unwrap();
        let empty = AggregatorState::new(1, 3);
        let out = combine_outputs(&a, &empty).unwrap();
        assert_eq!(argmax(&out), a.predict().unwrap());
        assert!(matches!(
            combine_outputs(&empty, &empty),
            Err(Error::NoPrediction)
        ));
    }

    #[test]
    fn lockstep_aggregators_agree_with_single() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut single = AggregatorState::new(2, 5);
        let mut pair = [AggregatorState::new(2, 5), AggregatorState::new(2, 5)];
        for i in 0..2000u64 {
            if rng.random_bool(0.02) {
                single.reset();
                pair.iter_mut().for_each(AggregatorState::reset);
            }
            let r = frame(
                i,
                vec![0.0, 0.0],
                (0..5).map(|_| rng.random_range(-1.0..1.0)).collect(),
            );
            single.push(&r).unwrap();
            for a in &mut pair {
                a.push(&r).unwrap();
            }
            let o = combine_outputs(&pair[0], &pair[1]).unwrap();
            assert_eq!(argmax(&o), single.predict().unwrap());
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(TwoFoldState::new(DblConfig::new(1.0), 0, 2, 2).is_err());
        assert!(TwoFoldState::new(DblConfig::new(0.0), 5, 2, 2).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let mut s = TwoFoldState::new(DblConfig::new(1.0), 5, 2, 2).unwrap();
        assert!(matches!(
            s.step(&frame(0, vec![0.0], vec![0.0, 0.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
