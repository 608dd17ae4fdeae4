//! Evaluation protocols: offline, streaming and online runs over trimmed or
//! untrimmed annotations, plus accuracy curves and parameter sweeps.
//!
//! Every runner scores each labeled segment once, at its own stop frame.
//! Unknown segments are never scored.

mod online;
mod report;
mod runners;
mod sweep;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use online::{run_online, OnlinePipeline};
pub use report::{
    aggregate_domains, ClassCount, DomainMeans, DomainPair, EvalReport, PairAccuracy,
    SegmentPrediction, VideoOutcome,
};
pub use runners::{accuracy_vs_percentage, curve_csv, run_offline, run_streaming, CurvePoint};
pub use sweep::{sweep, sweep_csv, SweepGrid, SweepRow};

use crate::aggregate::{SamplerSpec, ScoreSpace};
use crate::boundary::{DblConfig, SblConfig};
use crate::error::{Error, Result};
use crate::stream::StreamDataset;
use crate::twofold::DEFAULT_DELTA;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Offline,
    Streaming,
    Online,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trimming {
    /// Only labeled frames are fed to the pipeline.
    Trimmed,
    /// Unknown intervals flow through the pipeline as well.
    Untrimmed,
}

/// How an online run decides when to clean its aggregator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryStrategy {
    /// Reset every `k` frames.
    Sbl { k: u64 },
    /// Single aggregator reset by the anomaly detector.
    Dbl { dbl: DblConfig },
    /// Two-fold aggregator with hand-off delay `delta`.
    A2 {
        dbl: DblConfig,
        #[serde(default = "default_delta")]
        delta: u64,
    },
    /// Reset at externally supplied frames, keyed by video id.
    External {
        boundaries: BTreeMap<String, Vec<u64>>,
    },
}

fn default_delta() -> u64 {
    DEFAULT_DELTA
}

impl BoundaryStrategy {
    pub fn validate(&self) -> Result<()> {
        match self {
            BoundaryStrategy::Sbl { k } => SblConfig { k: *k }.validate(),
            BoundaryStrategy::Dbl { dbl } => dbl.validate(),
            BoundaryStrategy::A2 { dbl, delta } => {
                dbl.validate()?;
                if *delta == 0 {
                    return Err(Error::InvalidConfig(
                        "delta must be at least 1 frame".into(),
                    ));
                }
                Ok(())
            }
            BoundaryStrategy::External { .. } => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BoundaryStrategy::Sbl { .. } => "sbl",
            BoundaryStrategy::Dbl { .. } => "dbl",
            BoundaryStrategy::A2 { .. } => "a2",
            BoundaryStrategy::External { .. } => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub mode: Mode,
    pub trimming: Trimming,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundaryStrategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerSpec>,
    #[serde(default)]
    pub score_space: ScoreSpace,
}

impl ProtocolSpec {
    pub fn offline(sampler: SamplerSpec) -> Self {
        Self {
            mode: Mode::Offline,
            trimming: Trimming::Trimmed,
            boundary: None,
            sampler: Some(sampler),
            score_space: ScoreSpace::Logits,
        }
    }

    pub fn streaming(trimming: Trimming) -> Self {
        Self {
            mode: Mode::Streaming,
            trimming,
            boundary: None,
            sampler: None,
            score_space: ScoreSpace::Logits,
        }
    }

    pub fn online(trimming: Trimming, boundary: BoundaryStrategy) -> Self {
        Self {
            mode: Mode::Online,
            trimming,
            boundary: Some(boundary),
            sampler: None,
            score_space: ScoreSpace::Logits,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        match self.mode {
            Mode::Offline => {
                if self.trimming != Trimming::Trimmed {
                    return bad("offline runs require trimmed segments");
                }
                if self.boundary.is_some() {
                    return bad("offline runs use annotated boundaries, drop `boundary`");
                }
                match &self.sampler {
                    Some(s) => s.validate(),
                    None => bad("offline runs need a sampler"),
                }
            }
            Mode::Streaming => {
                if self.boundary.is_some() {
                    return bad("streaming runs reset at annotated boundaries, drop `boundary`");
                }
                if self.sampler.is_some() {
                    return bad("streaming runs use every frame, drop `sampler`");
                }
                Ok(())
            }
            Mode::Online => {
                if self.sampler.is_some() {
                    return bad("online runs use every frame, drop `sampler`");
                }
                match &self.boundary {
                    Some(b) => b.validate(),
                    None => bad("online runs need a boundary strategy"),
                }
            }
        }
    }
}

/// One video plus the domain its scores were produced by.
///
/// `train_domain` names the domain of the model that produced the stream;
/// the test domain is the manifest's `domain_id`.
#[derive(Debug, Clone, Copy)]
pub struct EvalInput<'a> {
    pub dataset: &'a StreamDataset,
    pub train_domain: &'a str,
}

impl<'a> EvalInput<'a> {
    /// Seen setting: trained and tested on the video's own domain.
    pub fn seen(dataset: &'a StreamDataset) -> Self {
        Self {
            dataset,
            train_domain: &dataset.manifest.domain_id,
        }
    }

    pub fn all_seen(datasets: &'a [StreamDataset]) -> Vec<Self> {
        datasets.iter().map(Self::seen).collect()
    }

    fn pair(&self) -> DomainPair {
        DomainPair::new(self.train_domain, &self.dataset.manifest.domain_id)
    }
}

/// Runs whichever protocol `spec` selects.
pub fn run(inputs: &[EvalInput<'_>], spec: &ProtocolSpec) -> Result<EvalReport> {
    spec.validate()?;
    match spec.mode {
        Mode::Offline => run_offline(inputs, spec),
        Mode::Streaming => run_streaming(inputs, spec),
        Mode::Online => run_online(inputs, spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_invariants() {
        assert!(ProtocolSpec::offline(SamplerSpec::uniform(5, 1))
            .validate()
            .is_ok());
        let mut s = ProtocolSpec::offline(SamplerSpec::uniform(5, 1));
        s.trimming = Trimming::Untrimmed;
        assert!(s.validate().is_err());
        s = ProtocolSpec::offline(SamplerSpec::uniform(5, 1));
        s.sampler = None;
        assert!(s.validate().is_err());

        let mut s = ProtocolSpec::streaming(Trimming::Untrimmed);
        assert!(s.validate().is_ok());
        s.boundary = Some(BoundaryStrategy::Sbl { k: 4 });
        assert!(s.validate().is_err());

        let mut s = ProtocolSpec::online(Trimming::Untrimmed, BoundaryStrategy::Sbl { k: 4 });
        assert!(s.validate().is_ok());
        s.boundary = None;
        assert!(s.validate().is_err());
        s.boundary = Some(BoundaryStrategy::Dbl {
            dbl: DblConfig::new(-1.0),
        });
        assert!(s.validate().is_err());
        s.boundary = Some(BoundaryStrategy::A2 {
            dbl: DblConfig::new(1.0),
            delta: 0,
        });
        assert!(s.validate().is_err());
    }

    #[test]
    fn strategy_json_shape() {
        let s: BoundaryStrategy =
            serde_json::from_str(r#"{"kind":"a2","dbl":{"threshold":5.0}}"#).unwrap();
        assert_eq!(
            s,
            BoundaryStrategy::A2 {
                dbl: DblConfig::new(5.0),
                delta: 20
            }
        );
        let s: BoundaryStrategy = serde_json::from_str(r#"{"kind":"sbl","k":16}"#).unwrap();
        assert_eq!(s, BoundaryStrategy::Sbl { k: 16 });
        assert!(
            serde_json::from_str::<BoundaryStrategy>(r#"{"kind":"sbl","k":16,"x":1}"#).is_err()
        );
        assert!(serde_json::from_str::<BoundaryStrategy>(
            r#"{"kind":"dbl","dbl":{"threshold":1.0,"bogus":2}}"#
        )
        .is_err());
    }
}
