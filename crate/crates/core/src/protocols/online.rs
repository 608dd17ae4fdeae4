use std::collections::BTreeMap;

use rayon::prelude::*;

use super::runners::{check_annotated, outcome};
use super::{BoundaryStrategy, EvalInput, EvalReport, ProtocolSpec, SegmentPrediction, Trimming};
use crate::aggregate::{argmax, AggregatorState, ScoreSpace};
use crate::boundary::{sbl_step, DblState};
use crate::error::{Error, Result};
use crate::stream::{FrameRecord, StreamDataset};
use crate::twofold::{BoundaryEvent, TwoFoldState};

/// Frame-by-frame pipeline without boundary supervision.
#[derive(Debug, Clone)]
pub enum OnlinePipeline {
    Sbl {
        agg: AggregatorState,
        k: u64,
        counter: u64,
        /// Clean before the next frame.
        pending_reset: bool,
    },
    Dbl {
        agg: AggregatorState,
        dbl: DblState,
    },
    TwoFold(TwoFoldState),
    External {
        agg: AggregatorState,
        boundaries: Vec<u64>,
        next: usize,
    },
}

impl OnlinePipeline {
    pub fn new(
        strategy: &BoundaryStrategy,
        video_id: &str,
        feature_dim: usize,
        num_classes: usize,
        space: ScoreSpace,
    ) -> Result<Self> {
        strategy.validate()?;
        let agg = AggregatorState::with_space(feature_dim, num_classes, space);
        Ok(match strategy {
            BoundaryStrategy::Sbl { k } => OnlinePipeline::Sbl {
                agg,
                k: *k,
                counter: 0,
                pending_reset: false,
            },
            BoundaryStrategy::Dbl { dbl } => OnlinePipeline::Dbl {
                agg,
                dbl: DblState::new(*dbl, feature_dim),
            },
            BoundaryStrategy::A2 { dbl, delta } => OnlinePipeline::TwoFold(
                TwoFoldState::with_space(*dbl, *delta, feature_dim, num_classes, space)?,
            ),
            BoundaryStrategy::External { boundaries } => {
                let mut list = boundaries.get(video_id).cloned().unwrap_or_default();
                list.sort_unstable();
                list.dedup();
                OnlinePipeline::External {
                    agg,
                    boundaries: list,
                    next: 0,
                }
            }
        })
    }

    /// Feeds one frame; returns the aggregator reset it caused, if any.
    pub fn step(&mut self, record: &FrameRecord) -> Result<Option<BoundaryEvent>> {
        let at = |aggregator: u8| BoundaryEvent {
            frame_index: record.frame_index,
            aggregator,
        };
        match self {
            OnlinePipeline::Sbl {
                agg,
                k,
                counter,
                pending_reset,
            } => {
                agg.check_dims(record)?;
                let event = std::mem::take(pending_reset).then(|| {
                    agg.reset();
                    at(0)
                });
                agg.push(record)?;
                let (next, reset) = sbl_step(*counter, *k);
                *counter = next;
                *pending_reset = reset;
                Ok(event)
            }
            OnlinePipeline::Dbl { agg, dbl } => {
                agg.check_dims(record)?;
                let fired = dbl.step(record)?;
                if fired {
                    agg.reset();
                }
                agg.push(record)?;
                Ok(fired.then(|| at(0)))
            }
            OnlinePipeline::TwoFold(state) => state.step(record),
            OnlinePipeline::External {
                agg,
                boundaries,
                next,
            } => {
                agg.check_dims(record)?;
                while *next < boundaries.len() && boundaries[*next] < record.frame_index {
                    *next += 1;
                }
                let fired = boundaries.get(*next) == Some(&record.frame_index);
                if fired {
                    *next += 1;
                    agg.reset();
                }
                agg.push(record)?;
                Ok(fired.then(|| at(0)))
            }
        }
    }

    /// Current score vector (combined for the two-fold aggregator).
    pub fn output_into(&self, out: &mut [f64]) -> Result<()> {
        match self {
            OnlinePipeline::TwoFold(state) => state.output_into(out),
            OnlinePipeline::Sbl { agg, .. }
            | OnlinePipeline::Dbl { agg, .. }
            | OnlinePipeline::External { agg, .. } => agg.output_into(out),
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            OnlinePipeline::TwoFold(state) => state.aggregators()[0].num_classes(),
            OnlinePipeline::Sbl { agg, .. }
            | OnlinePipeline::Dbl { agg, .. }
            | OnlinePipeline::External { agg, .. } => agg.num_classes(),
        }
    }

    /// Current prediction, `None` when the pipeline holds no frames.
    pub fn predict(&self) -> Result<Option<usize>> {
        let mut out = vec![0.0; self.num_classes()];
        match self.output_into(&mut out) {
            Ok(()) => Ok(Some(argmax(&out))),
            Err(Error::NoPrediction) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

fn online_video(
    ds: &StreamDataset,
    strategy: &BoundaryStrategy,
    trimming: Trimming,
    space: ScoreSpace,
) -> Result<(Vec<SegmentPrediction>, Vec<BoundaryEvent>)> {
    check_annotated(ds)?;
    let mut pipeline = OnlinePipeline::new(
        strategy,
        &ds.manifest.video_id,
        ds.feature_dim(),
        ds.num_classes(),
        space,
    )?;

    // Evaluation points: labeled segment indices keyed by stop frame.
    let mut due: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    let labeled: Vec<_> = ds.labeled_segments().collect();
    for (i, seg) in labeled.iter().enumerate() {
        due.entry(seg.stop_frame).or_default().push(i);
    }
    let mut skip = vec![false; ds.records.len()];
    if trimming == Trimming::Trimmed {
        for seg in ds.segments.iter().filter(|s| s.label.is_unknown()) {
            skip[seg.start_frame as usize..=seg.stop_frame as usize].fill(true);
        }
    }

    let mut predictions: Vec<Option<SegmentPrediction>> = vec![None; labeled.len()];
    let mut events = Vec::new();
    for record in &ds.records {
        if skip[record.frame_index as usize] {
            continue;
        }
        if let Some(e) = pipeline.step(record)? {
            events.push(e);
        }
        if let Some(ending) = due.get(&record.frame_index) {
            let predicted = pipeline.predict()?;
            for &i in ending {
                let seg = labeled[i];
                predictions[i] = Some(SegmentPrediction {
                    start_frame: seg.start_frame,
                    stop_frame: seg.stop_frame,
                    label: seg.label.class().expect("labeled segment"),
                    predicted,
                });
            }
        }
    }
    let predictions = predictions
        .into_iter()
        .map(|p| p.expect("every stop frame lies inside the stream"))
        .collect();
    Ok((predictions, events))
}

/// Online protocol: one continuous pass per video. Predictions are read at
/// each labeled segment's stop frame; boundaries come from the strategy.
pub fn run_online(inputs: &[EvalInput<'_>], spec: &ProtocolSpec) -> Result<EvalReport> {
    let strategy = spec
        .boundary
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("online runs need a boundary strategy".into()))?;
    strategy.validate()?;
    let videos = inputs
        .par_iter()
        .map(|input| {
            let (preds, events) =
                online_video(input.dataset, strategy, spec.trimming, spec.score_space)?;
            let mut out = outcome(input, preds);
            out.boundary_events = Some(events);
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_videos(videos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::DblConfig;
    use crate::stream::{Label, LabelSegment, StreamManifest};

    fn frame(i: u64, f: f32, logits: [f32; 2]) -> FrameRecord {
        FrameRecord::new(i, vec![f], logits.to_vec())
    }

    #[test]
    fn sbl_resets_after_each_block() {
        let mut p = OnlinePipeline::new(
            &BoundaryStrategy::Sbl { k: 4 },
            "v",
            1,
            2,
            ScoreSpace::Logits,
        )
        .unwrap();
        let events: Vec<u64> = (0..12)
            .filter_map(|i| p.step(&frame(i, 0.0, [1.0, 0.0])).unwrap())
            .map(|e| e.frame_index)
            .collect();
        // Blocks are [0,3], [4,7], [8,11]; each new block starts clean.
        assert_eq!(events, vec![4, 8]);
        match &p {
            OnlinePipeline::Sbl { agg, .. } => assert_eq!(agg.n(), 4),
            _ => unreachable!(),
        }
    }

    #[test]
    fn external_resets_at_listed_frames() {
        let strategy = BoundaryStrategy::External {
            boundaries: [("v".to_string(), vec![5, 2, 5])].into_iter().collect(),
        };
        let mut p = OnlinePipeline::new(&strategy, "v", 1, 2, ScoreSpace::Logits).unwrap();
        let events: Vec<u64> = (0..8)
            .filter_map(|i| p.step(&frame(i, 0.0, [0.0, 1.0])).unwrap())
            .map(|e| e.frame_index)
            .collect();
        assert_eq!(events, vec![2, 5]);
        // Unknown video ids get no boundaries.
        let mut q = OnlinePipeline::new(&strategy, "other", 1, 2, ScoreSpace::Logits).unwrap();
        assert!((0..8).all(|i| q.step(&frame(i, 0.0, [0.0, 1.0])).unwrap().is_none()));
    }

    fn toy() -> StreamDataset {
        // Unknown [0,3], action 0 on [4,9], action 1 on [10,15].
        let mut records = Vec::new();
        for i in 0..16u64 {
            let r = match i {
                0..=3 => frame(i, 5.0, [0.0, 9.0]),
                4..=9 => frame(i, 0.0, [1.0, 0.0]),
                _ => frame(i, 1.0, [0.0, 1.0]),
            };
            records.push(r);
        }
        let manifest = StreamManifest {
            video_id: "v".into(),
            domain_id: "D1".into(),
            fps: 30.0,
            num_frames: 16,
            feature_dim: 1,
            num_classes: 2,
            class_names: vec!["a".into(), "b".into()],
        };
        let segs = vec![
            LabelSegment::new("v", 0, 3, Label::Unknown),
            LabelSegment::new("v", 4, 9, Label::Action(0)),
            LabelSegment::new("v", 10, 15, Label::Action(1)),
        ];
        StreamDataset::new(manifest, records, segs).unwrap()
    }

    #[test]
    fn dbl_online_localizes_boundaries() {
        let ds = toy();
        let spec = ProtocolSpec::online(
            Trimming::Untrimmed,
            BoundaryStrategy::Dbl {
                dbl: DblConfig::new(0.5).with_warmup(0),
            },
        );
        let r = run_online(&[EvalInput::seen(&ds)], &spec).unwrap();
        assert_eq!(r.num_evaluated_segments, 2);
        assert_eq!(r.num_correct, 2);
        let frames: Vec<u64> = r.videos[0]
            .boundary_events
            .as_ref()
            .unwrap()
            .iter()
            .map(|e| e.frame_index)
            .collect();
        assert_eq!(frames, vec![4, 10]);
    }

    #[test]
    fn trimmed_online_skips_unknown_frames() {
        let ds = toy();
        // Without cleaning, the unknown frames' strong class-1 logits would
        // win at frame 9 in the untrimmed setting.
        let never = BoundaryStrategy::Sbl { k: 1_000 };
        let untrimmed = run_online(
            &[EvalInput::seen(&ds)],
            &ProtocolSpec::online(Trimming::Untrimmed, never.clone()),
        )
        .unwrap();
        let trimmed = run_online(
            &[EvalInput::seen(&ds)],
            &ProtocolSpec::online(Trimming::Trimmed, never),
        )
        .unwrap();
        assert_eq!(untrimmed.videos[0].predictions[0].predicted, Some(1));
        assert_eq!(trimmed.videos[0].predictions[0].predicted, Some(0));
    }

    #[test]
    fn unknown_logits_never_change_evaluation_count() {
        let ds = toy();
        let mut noisy = ds.clone();
        for r in &mut noisy.records[0..4] {
            r.logits = vec![-100.0, 100.0];
        }
        let spec = ProtocolSpec::online(Trimming::Untrimmed, BoundaryStrategy::Sbl { k: 3 });
        let a = run_online(&[EvalInput::seen(&ds)], &spec).unwrap();
        let b = run_online(&[EvalInput::seen(&noisy)], &spec).unwrap();
        assert_eq!(a.num_evaluated_segments, b.num_evaluated_segments);
    }

    #[test]
    fn a2_prediction_reads_combined_output() {
        let ds = toy();
        let spec = ProtocolSpec::online(
            Trimming::Untrimmed,
            BoundaryStrategy::A2 {
                dbl: DblConfig::new(0.5).with_warmup(0),
                delta: 2,
            },
        );
        let r = run_online(&[EvalInput::seen(&ds)], &spec).unwrap();
        assert_eq!(r.num_evaluated_segments, 2);
        let events = r.videos[0].boundary_events.as_ref().unwrap();
        for w in events.windows(2) {
            if w[0].aggregator != w[1].aggregator {
                assert!(w[1].frame_index >= w[0].frame_index + 2);
            }
        }
    }
}
