use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalInput, EvalReport, ProtocolSpec, SegmentPrediction, VideoOutcome};
use crate::aggregate::{sample_indices, AggregatorState, SamplerSpec, ScoreSpace};
use crate::error::{Error, Result};
use crate::stream::{LabelSegment, StreamDataset};

pub(super) fn check_annotated(ds: &StreamDataset) -> Result<()> {
    if ds.segments.is_empty() {
        return Err(Error::AnnotationMissing(ds.manifest.video_id.clone()));
    }
    Ok(())
}

pub(super) fn outcome(input: &EvalInput<'_>, predictions: Vec<SegmentPrediction>) -> VideoOutcome {
    VideoOutcome {
        video_id: input.dataset.manifest.video_id.clone(),
        pair: input.pair(),
        predictions,
        boundary_events: None,
    }
}

fn prediction(seg: &LabelSegment, predicted: Option<usize>) -> SegmentPrediction {
    SegmentPrediction {
        start_frame: seg.start_frame,
        stop_frame: seg.stop_frame,
        label: seg.label.class().expect("labeled segment"),
        predicted,
    }
}

fn predict(agg: &AggregatorState) -> Result<Option<usize>> {
    match agg.predict() {
        Ok(c) => Ok(Some(c)),
        Err(Error::NoPrediction) => Ok(None),
        Err(e) => Err(e),
    }
}

fn offline_video(
    ds: &StreamDataset,
    sampler: &SamplerSpec,
    space: ScoreSpace,
) -> Result<Vec<SegmentPrediction>> {
    check_annotated(ds)?;
    let mut agg = AggregatorState::with_space(ds.feature_dim(), ds.num_classes(), space);
    ds.labeled_segments()
        .map(|seg| {
            agg.reset();
            let records = ds.segment_records(seg);
            for clip in sample_indices(sampler, records.len()) {
                for i in clip {
                    agg.push(&records[i])?;
                }
            }
            Ok(prediction(seg, predict(&agg)?))
        })
        .collect()
}

/// Offline protocol: per labeled segment, sample clips within the annotated
/// range and average the scores of every sampled record.
pub fn run_offline(inputs: &[EvalInput<'_>], spec: &ProtocolSpec) -> Result<EvalReport> {
    let sampler = spec
        .sampler
        .ok_or_else(|| Error::InvalidConfig("offline runs need a sampler".into()))?;
    sampler.validate()?;
    let videos = inputs
        .par_iter()
        .map(|input| {
            offline_video(input.dataset, &sampler, spec.score_space).map(|p| outcome(input, p))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_videos(videos))
}

/// Offset (from the segment start) after which a prediction is read when a
/// fraction `p` of the segment has been observed: `ceil(p * len) - 1`.
fn cutoff(p: f64, len: u64) -> u64 {
    ((p * len as f64).ceil() as u64).clamp(1, len) - 1
}

/// Streaming predictions for each fraction, one list per fraction.
fn streaming_video(
    ds: &StreamDataset,
    fractions: &[f64],
    space: ScoreSpace,
) -> Result<Vec<Vec<SegmentPrediction>>> {
    check_annotated(ds)?;
    let mut agg = AggregatorState::with_space(ds.feature_dim(), ds.num_classes(), space);
    let mut out = vec![Vec::new(); fractions.len()];
    for seg in ds.labeled_segments() {
        let len = seg.len();
        let cuts: Vec<u64> = fractions.iter().map(|&p| cutoff(p, len)).collect();
        let last = *cuts.iter().max().expect("at least one fraction");
        agg.reset();
        for (offset, record) in ds
            .segment_records(seg)
            .iter()
            .enumerate()
            .take(last as usize + 1)
        {
            agg.push(record)?;
            for (k, &c) in cuts.iter().enumerate() {
                if c == offset as u64 {
                    out[k].push(prediction(seg, predict(&agg)?));
                }
            }
        }
    }
    Ok(out)
}

fn streaming_reports(
    inputs: &[EvalInput<'_>],
    fractions: &[f64],
    space: ScoreSpace,
) -> Result<Vec<EvalReport>> {
    let per_video = inputs
        .par_iter()
        .map(|input| streaming_video(input.dataset, fractions, space))
        .collect::<Result<Vec<_>>>()?;
    let mut per_fraction: Vec<Vec<VideoOutcome>> = vec![Vec::new(); fractions.len()];
    for (input, lists) in inputs.iter().zip(per_video) {
        for (k, preds) in lists.into_iter().enumerate() {
            per_fraction[k].push(outcome(input, preds));
        }
    }
    Ok(per_fraction
        .into_iter()
        .map(EvalReport::from_videos)
        .collect())
}

/// Streaming protocol: a fresh aggregator per labeled segment, fed every
/// frame of the segment, read after the stop frame.
pub fn run_streaming(inputs: &[EvalInput<'_>], spec: &ProtocolSpec) -> Result<EvalReport> {
    let mut reports = streaming_reports(inputs, &[1.0], spec.score_space)?;
    Ok(reports.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fraction: f64,
    pub report: EvalReport,
}

impl CurvePoint {
    pub fn accuracy(&self) -> f64 {
        self.report.overall_accuracy().unwrap_or(0.0)
    }
}

/// Streaming accuracy when only the first fraction `p` of every segment has
/// been observed. The `p = 1` point is exactly the streaming result.
pub fn accuracy_vs_percentage(
    inputs: &[EvalInput<'_>],
    fractions: &[f64],
    space: ScoreSpace,
) -> Result<Vec<CurvePoint>> {
    if fractions.is_empty() {
        return Err(Error::InvalidConfig("no fractions given".into()));
    }
    if let Some(p) = fractions.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
        return Err(Error::InvalidConfig(format!("fraction {p} outside (0, 1]")));
    }
    let reports = streaming_reports(inputs, fractions, space)?;
    Ok(fractions
        .iter()
        .zip(reports)
        .map(|(&fraction, report)| CurvePoint { fraction, report })
        .collect())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

/// `fraction,accuracy,mean_seen,mean_unseen,segments`
pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("fraction,accuracy,mean_seen,mean_unseen,segments\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{:.6},{},{},{}",
            p.fraction,
            p.accuracy(),
            opt(p.report.mean_seen),
            opt(p.report.mean_unseen),
            p.report.num_evaluated_segments
        );
    }
    out
}

pub(super) fn csv_opt(v: Option<f64>) -> String {
    opt(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::Trimming;
    use crate::stream::{FrameRecord, Label, StreamManifest};

    fn manifest(n: u64) -> StreamManifest {
        StreamManifest {
            video_id: "v".into(),
            domain_id: "D1".into(),
            fps: 30.0,
            num_frames: n,
            feature_dim: 1,
            num_classes: 3,
            class_names: vec!["a".into(), "b".into(), "c".into()],
        }
    }

    fn dataset(logits: &[[f32; 3]], segments: Vec<LabelSegment>) -> StreamDataset {
        let records = logits
            .iter()
            .enumerate()
            .map(|(i, l)| FrameRecord::new(i as u64, vec![0.0], l.to_vec()))
            .collect();
        StreamDataset::new(manifest(logits.len() as u64), records, segments).unwrap()
    }

    #[test]
    fn cutoff_rule() {
        assert_eq!(cutoff(1.0, 10), 9);
        assert_eq!(cutoff(0.1, 10), 0);
        assert_eq!(cutoff(0.15, 10), 1);
        assert_eq!(cutoff(0.01, 10), 0);
        assert_eq!(cutoff(0.5, 1), 0);
    }

    #[test]
    fn agreeing_frames_are_correct_in_every_protocol() {
        let ds = dataset(
            &[[0.0, 1.0, 0.0]; 6],
            vec![LabelSegment::new("v", 0, 5, Label::Action(1))],
        );
        let inputs = [EvalInput::seen(&ds)];
        let off = run_offline(&inputs, &ProtocolSpec::offline(SamplerSpec::uniform(5, 1))).unwrap();
        let st = run_streaming(&inputs, &ProtocolSpec::streaming(Trimming::Trimmed)).unwrap();
        assert_eq!(off.num_correct, 1);
        assert_eq!(st.num_correct, 1);
    }

    #[test]
    fn streaming_is_mean_of_logits() {
        // Per-frame argmax is mostly class 0, but the mean favours class 2.
        let logits = [
            [1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 5.0],
        ];
        let ds = dataset(
            &logits,
            vec![LabelSegment::new("v", 0, 3, Label::Action(2))],
        );
        let r = run_streaming(
            &[EvalInput::seen(&ds)],
            &ProtocolSpec::streaming(Trimming::Trimmed),
        )
        .unwrap();
        assert_eq!(r.videos[0].predictions[0].predicted, Some(2));
    }

    #[test]
    fn uniform_exact_fit_counts_each_frame_once() {
        let logits = [
            [3.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0],
        ];
        let ds = dataset(
            &logits,
            vec![LabelSegment::new("v", 0, 4, Label::Action(0))],
        );
        let r = run_offline(
            &[EvalInput::seen(&ds)],
            &ProtocolSpec::offline(SamplerSpec::uniform(5, 1)),
        )
        .unwrap();
        // Sum is [3, 3, 0]; the tie resolves to class 0.
        assert_eq!(r.videos[0].predictions[0].predicted, Some(0));
    }

    #[test]
    fn unknown_segments_are_not_scored() {
        let ds = dataset(
            &[[0.0, 1.0, 0.0]; 10],
            vec![
                LabelSegment::new("v", 0, 4, Label::Unknown),
                LabelSegment::new("v", 5, 9, Label::Action(1)),
            ],
        );
        let r = run_streaming(
            &[EvalInput::seen(&ds)],
            &ProtocolSpec::streaming(Trimming::Untrimmed),
        )
        .unwrap();
        assert_eq!(r.num_evaluated_segments, 1);
    }

    #[test]
    fn missing_annotations() {
        let ds = dataset(&[[0.0, 1.0, 0.0]; 3], vec![]);
        let err = run_streaming(
            &[EvalInput::seen(&ds)],
            &ProtocolSpec::streaming(Trimming::Trimmed),
        )
        .unwrap_err();
        assert!(matches!(err, Error::AnnotationMissing(_)));
    }

    #[test]
    fn curve_rejects_bad_fractions() {
        let ds = dataset(
            &[[0.0, 1.0, 0.0]; 3],
            vec![LabelSegment::new("v", 0, 2, Label::Action(1))],
        );
        let inputs = [EvalInput::seen(&ds)];
        assert!(accuracy_vs_percentage(&inputs, &[0.0], ScoreSpace::Logits).is_err());
        assert!(accuracy_vs_percentage(&inputs, &[1.5], ScoreSpace::Logits).is_err());
        assert!(accuracy_vs_percentage(&inputs, &[], ScoreSpace::Logits).is_err());
        let pts = accuracy_vs_percentage(&inputs, &[0.5, 1.0], ScoreSpace::Logits).unwrap();
        assert!(curve_csv(&pts).starts_with("fraction,accuracy"));
        assert_eq!(curve_csv(&pts).lines().count(), 3);
    }
}
