use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::twofold::BoundaryEvent;

/// (train domain, test domain).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DomainPair {
    pub train: String,
    pub test: String,
}

impl DomainPair {
    pub fn new(train: impl Into<String>, test: impl Into<String>) -> Self {
        Self {
            train: train.into(),
            test: test.into(),
        }
    }

    pub fn is_seen(&self) -> bool {
        self.train == self.test
    }
}

impl fmt::Display for DomainPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.train, self.test)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentPrediction {
    pub start_frame: u64,
    pub stop_frame: u64,
    pub label: usize,
    /// `None` when the pipeline had nothing to predict from.
    pub predicted: Option<usize>,
}

impl SegmentPrediction {
    pub fn is_correct(&self) -> bool {
        self.predicted == Some(self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoOutcome {
    pub video_id: String,
    pub pair: DomainPair,
    pub predictions: Vec<SegmentPrediction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_events: Option<Vec<BoundaryEvent>>,
}

impl VideoOutcome {
    pub fn correct(&self) -> u64 {
        self.predictions.iter().filter(|p| p.is_correct()).count() as u64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCount {
    pub total: u64,
    pub correct: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAccuracy {
    pub pair: DomainPair,
    pub correct: u64,
    pub total: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainMeans {
    pub mean_seen: Option<f64>,
    pub mean_unseen: Option<f64>,
}

/// Unweighted means of per-pair accuracies over seen (`Di->Di`) and unseen
/// (`Di->Dj`) pairs. A side with no pairs is `None`.
pub fn aggregate_domains(pairs: &BTreeMap<DomainPair, f64>) -> DomainMeans {
    let mean = |seen: bool| {
        let vals: Vec<f64> = pairs
            .iter()
            .filter(|(p, _)| p.is_seen() == seen)
            .map(|(_, &a)| a)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    DomainMeans {
        mean_seen: mean(true),
        mean_unseen: mean(false),
    }
}

/// Result of one protocol run over a set of videos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pairs: Vec<PairAccuracy>,
    pub mean_seen: Option<f64>,
    pub mean_unseen: Option<f64>,
    pub num_evaluated_segments: u64,
    pub num_correct: u64,
    pub per_class_counts: BTreeMap<usize, ClassCount>,
    pub videos: Vec<VideoOutcome>,
}

impl EvalReport {
    /// Builds a report; the result does not depend on the order of `videos`.
    pub fn from_videos(mut videos: Vec<VideoOutcome>) -> Self {
        videos.sort_by(|a, b| (&a.video_id, &a.pair).cmp(&(&b.video_id, &b.pair)));
        let mut per_pair: BTreeMap<DomainPair, (u64, u64)> = BTreeMap::new();
        let mut per_class: BTreeMap<usize, ClassCount> = BTreeMap::new();
        for v in &videos {
            if v.predictions.is_empty() {
                continue;
            }
            let entry = per_pair.entry(v.pair.clone()).or_default();
            for p in &v.predictions {
                let ok = u64::from(p.is_correct());
                entry.0 += ok;
                entry.1 += 1;
                let c = per_class.entry(p.label).or_default();
                c.total += 1;
                c.correct += ok;
            }
        }
        let pairs: Vec<PairAccuracy> = per_pair
            .into_iter()
            .map(|(pair, (correct, total))| PairAccuracy {
                pair,
                correct,
                total,
                accuracy: correct as f64 / total as f64,
            })
            .collect();
        let accuracies: BTreeMap<DomainPair, f64> =
            pairs.iter().map(|p| (p.pair.clone(), p.accuracy)).collect();
        let means = aggregate_domains(&accuracies);
        Self {
            num_evaluated_segments: pairs.iter().map(|p| p.total).sum(),
            num_correct: pairs.iter().map(|p| p.correct).sum(),
            pairs,
            mean_seen: means.mean_seen,
            mean_unseen: means.mean_unseen,
            per_class_counts: per_class,
            videos,
        }
    }

    /// Combines two reports over disjoint video sets.
    pub fn merge(self, other: EvalReport) -> Self {
        let mut videos = self.videos;
        videos.extend(other.videos);
        Self::from_videos(videos)
    }

    pub fn per_pair_accuracy(&self) -> BTreeMap<DomainPair, f64> {
        self.pairs
            .iter()
            .map(|p| (p.pair.clone(), p.accuracy))
            .collect()
    }

    /// Pooled accuracy over every evaluated segment.
    pub fn overall_accuracy(&self) -> Option<f64> {
        (self.num_evaluated_segments > 0)
            .then(|| self.num_correct as f64 / self.num_evaluated_segments as f64)
    }

    /// Predictions of every video, in report order.
    pub fn predictions(&self) -> impl Iterator<Item = &SegmentPrediction> {
        self.videos.iter().flat_map(|v| v.predictions.iter())
    }

    /// `train,test,correct,total,accuracy`, one row per domain pair.
    pub fn pairs_csv(&self) -> String {
        let mut out = String::from("train,test,correct,total,accuracy\n");
        for p in &self.pairs {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6}",
                p.pair.train, p.pair.test, p.correct, p.total, p.accuracy
            );
        }
        out
    }

    /// `video_id,train,test,start_frame,stop_frame,label,predicted`; an
    /// empty `predicted` means the aggregator had no frames.
    pub fn predictions_csv(&self) -> String {
        let mut out = String::from("video_id,train,test,start_frame,stop_frame,label,predicted\n");
        for v in &self.videos {
            for p in &v.predictions {
                let predicted = p.predicted.map_or_else(String::new, |c| c.to_string());
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    v.video_id,
                    v.pair.train,
                    v.pair.test,
                    p.start_frame,
                    p.stop_frame,
                    p.label,
                    predicted
                );
            }
        }
        out
    }

    /// Aligned-column summary for terminals.
    pub fn to_text(&self) -> String {
        let pct =
            |v: Option<f64>| v.map_or_else(|| "-".to_string(), |a| format!("{:.2}", 100.0 * a));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>9} {:>9} {:>9}",
            "pair", "correct", "total", "top1(%)"
        );
        for p in &self.pairs {
            let _ = writeln!(
                out,
                "{:<16} {:>9} {:>9} {:>9}",
                p.pair.to_string(),
                p.correct,
                p.total,
                pct(Some(p.accuracy))
            );
        }
        let _ = writeln!(out, "{:<16} {:>29}", "mean seen", pct(self.mean_seen));
        let _ = writeln!(out, "{:<16} {:>29}", "mean unseen", pct(self.mean_unseen));
        let _ = writeln!(
            out,
            "{:<16} {:>9} {:>9} {:>9}",
            "overall",
            self.num_correct,
            self.num_evaluated_segments,
            pct(self.overall_accuracy())
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(a: &str, b: &str) -> DomainPair {
        DomainPair::new(a, b)
    }

    #[test]
    fn seen_and_unseen_means() {
        let pairs: BTreeMap<_, _> = [
            (pair("D1", "D1"), 0.6),
            (pair("D1", "D2"), 0.3),
            (pair("D2", "D1"), 0.5),
        ]
        .into_iter()
        .collect();
        let m = aggregate_domains(&pairs);
        assert!((m.mean_seen.unwrap() - 0.6).abs() < 1e-12);
        assert!((m.mean_unseen.unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn single_seen_pair_has_no_unseen_mean() {
        let pairs: BTreeMap<_, _> = [(pair("D2", "D2"), 0.75)].into_iter().collect();
        let m = aggregate_domains(&pairs);
        assert_eq!(m.mean_seen, Some(0.75));
        assert_eq!(m.mean_unseen, None);
    }

    fn outcome(id: &str, p: DomainPair, results: &[(usize, Option<usize>)]) -> VideoOutcome {
        VideoOutcome {
            video_id: id.into(),
            pair: p,
            predictions: results
                .iter()
                .enumerate()
                .map(|(i, &(label, predicted))| SegmentPrediction {
                    start_frame: i as u64 * 10,
                    stop_frame: i as u64 * 10 + 9,
                    label,
                    predicted,
                })
                .collect(),
            boundary_events: None,
        }
    }

    #[test]
    fn report_counts_and_merge_order() {
        let a = outcome(
            "v1",
            pair("D1", "D1"),
            &[(0, Some(0)), (1, Some(0)), (1, None)],
        );
        let b = outcome("v2", pair("D1", "D2"), &[(2, Some(2))]);
        let ab = EvalReport::from_videos(vec![a.clone()])
            .merge(EvalReport::from_videos(vec![b.clone()]));
        let ba = EvalReport::from_videos(vec![b]).merge(EvalReport::from_videos(vec![a]));
        assert_eq!(ab, ba);
        assert_eq!(ab.num_evaluated_segments, 4);
        assert_eq!(ab.num_correct, 2);
        assert_eq!(
            ab.per_class_counts[&1],
            ClassCount {
                total: 2,
                correct: 0
            }
        );
        assert!((ab.mean_seen.unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(ab.mean_unseen, Some(1.0));
        assert!(ab.to_text().contains("D1->D2"));
    }

    #[test]
    fn csv_rows() {
        let r = EvalReport::from_videos(vec![outcome(
            "v1",
            pair("D1", "D2"),
            &[(0, Some(0)), (1, None)],
        )]);
        assert_eq!(
            r.pairs_csv(),
            "train,test,correct,total,accuracy\nD1,D2,1,2,0.500000\n"
        );
        let csv = r.predictions_csv();
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(rows, ["v1,D1,D2,0,9,0,0", "v1,D1,D2,10,19,1,"]);
    }
}
