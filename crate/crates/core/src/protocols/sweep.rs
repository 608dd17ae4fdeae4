use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::runners::csv_opt;
use super::{run, BoundaryStrategy, EvalInput, EvalReport, Mode, ProtocolSpec};
use crate::error::{Error, Result};

/// One-parameter grid over an online protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepGrid {
    /// SBL period; replaces the strategy with `Sbl { k }`.
    K(Vec<u64>),
    /// DBL threshold of a `Dbl` or `A2` strategy.
    Tau(Vec<f64>),
    /// Hand-off delay of an `A2` strategy.
    Delta(Vec<u64>),
}

impl SweepGrid {
    pub fn parameter(&self) -> &'static str {
        match self {
            SweepGrid::K(_) => "k",
            SweepGrid::Tau(_) => "tau",
            SweepGrid::Delta(_) => "delta",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepGrid::K(v) | SweepGrid::Delta(v) => v.len(),
            SweepGrid::Tau(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The spec for every grid point, in grid order.
    pub fn specs(&self, base: &ProtocolSpec) -> Result<Vec<(f64, ProtocolSpec)>> {
        if base.mode != Mode::Online {
            return Err(Error::InvalidConfig(
                "sweeps run over online protocols".into(),
            ));
        }
        if self.is_empty() {
            return Err(Error::InvalidConfig("empty sweep grid".into()));
        }
        let with = |boundary: BoundaryStrategy| ProtocolSpec {
            boundary: Some(boundary),
            ..base.clone()
        };
        let mismatch = || {
            Err(Error::InvalidConfig(format!(
                "cannot sweep {} over a {} strategy",
                self.parameter(),
                base.boundary.as_ref().map_or("missing", |b| b.name())
            )))
        };
        let mut out = Vec::with_capacity(self.len());
        match self {
            SweepGrid::K(ks) => {
                for &k in ks {
                    out.push((k as f64, with(BoundaryStrategy::Sbl { k })));
                }
            }
            SweepGrid::Tau(taus) => {
                for &tau in taus {
                    let strategy = match &base.boundary {
                        Some(BoundaryStrategy::Dbl { dbl }) => BoundaryStrategy::Dbl {
                            dbl: crate::boundary::DblConfig {
                                threshold: tau,
                                ..*dbl
                            },
                        },
                        Some(BoundaryStrategy::A2 { dbl, delta }) => BoundaryStrategy::A2 {
                            dbl: crate::boundary::DblConfig {
                                threshold: tau,
                                ..*dbl
                            },
                            delta: *delta,
                        },
                        _ => return mismatch(),
                    };
                    out.push((tau, with(strategy)));
                }
            }
            SweepGrid::Delta(deltas) => {
                for &delta in deltas {
                    let Some(BoundaryStrategy::A2 { dbl, .. }) = &base.boundary else {
                        return mismatch();
                    };
                    out.push((
                        delta as f64,
                        with(BoundaryStrategy::A2 { dbl: *dbl, delta }),
                    ));
                }
            }
        }
        for (_, spec) in &out {
            spec.validate()?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub report: EvalReport,
}

/// Runs one report per grid point, in grid order.
pub fn sweep(
    inputs: &[EvalInput<'_>],
    base: &ProtocolSpec,
    grid: &SweepGrid,
) -> Result<Vec<SweepRow>> {
    grid.specs(base)?
        .into_iter()
        .map(|(value, spec)| {
            Ok(SweepRow {
                parameter: grid.parameter().to_string(),
                value,
                report: run(inputs, &spec)?,
            })
        })
        .collect()
}

/// `parameter,value,accuracy,mean_seen,mean_unseen,segments`
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("parameter,value,accuracy,mean_seen,mean_unseen,segments\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.parameter,
            r.value,
            csv_opt(r.report.overall_accuracy()),
            csv_opt(r.report.mean_seen),
            csv_opt(r.report.mean_unseen),
            r.report.num_evaluated_segments
        );
    }
    out
}
