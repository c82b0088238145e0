use serde::{Deserialize, Serialize};

use super::{Experiment, SimReport};
use crate::error::{Error, Result};
use crate::hardware::LatencyPolicy;
use crate::mapper::PlacementPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    /// Output tokens.
    SeqLen,
    Policy,
    LinkBw,
    TierPolicy,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "seqlen" | "seq-len" | "seq_len" => Ok(SweepAxis::SeqLen),
            "policy" => Ok(SweepAxis::Policy),
            "linkbw" | "link-bw" | "link_bw" => Ok(SweepAxis::LinkBw),
            "tier" | "tierpolicy" | "tier-policy" | "tier_policy" => Ok(SweepAxis::TierPolicy),
            other => Err(Error::field(
                "axis",
                format!("unknown sweep axis `{other}`"),
            )),
        }
    }

    /// Parses a comma-separated value list for this axis.
    pub fn points(self, values: &str) -> Result<Vec<SweepPoint>> {
        values
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(|v| {
                let bad = |why: &str| Error::field("values", format!("`{v}`: {why}"));
                Ok(match self {
                    SweepAxis::SeqLen => {
                        SweepPoint::SeqLen(v.parse().map_err(|_| bad("expected a token count"))?)
                    }
                    SweepAxis::Policy => SweepPoint::Policy(PlacementPolicy::parse(v)?),
                    SweepAxis::LinkBw => {
                        let bw: f64 = v.parse().map_err(|_| bad("expected bytes per second"))?;
                        if !(bw > 0.0 && bw.is_finite()) {
                            return Err(bad("bandwidth must be positive"));
                        }
                        SweepPoint::LinkBw(bw)
                    }
                    SweepAxis::TierPolicy => {
                        SweepPoint::TierPolicy(match v.to_ascii_lowercase().as_str() {
                            "mean" | "meanlayer" => LatencyPolicy::MeanLayer,
                            "worst" | "worstlayer" => LatencyPolicy::WorstLayer,
                            _ => return Err(bad("expected mean or worst")),
                        })
                    }
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SweepPoint {
    SeqLen(u32),
    Policy(PlacementPolicy),
    LinkBw(f64),
    TierPolicy(LatencyPolicy),
}

impl SweepPoint {
    pub fn label(&self) -> String {
        match self {
            SweepPoint::SeqLen(n) => n.to_string(),
            SweepPoint::Policy(p) => p.name().to_string(),
            SweepPoint::LinkBw(bw) => format!("{bw}"),
            SweepPoint::TierPolicy(LatencyPolicy::MeanLayer) => "mean".into(),
            SweepPoint::TierPolicy(LatencyPolicy::WorstLayer) => "worst".into(),
        }
    }

    pub fn apply(&self, base: &Experiment) -> Experiment {
        let mut e = base.clone();
        match *self {
            SweepPoint::SeqLen(n) => e.workload.output_tokens = n,
            SweepPoint::Policy(p) => e.policy = p,
            SweepPoint::LinkBw(bw) => e.platform.link.bandwidth_bytes_per_s = bw,
            SweepPoint::TierPolicy(p) => e.platform.dram.latency_policy = p,
        }
        e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub point: SweepPoint,
    pub result: std::result::Result<SimReport, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Sequential,
    /// Points run concurrently when the `parallel` feature is enabled.
    Parallel,
}

/// Runs one independent simulation per point. Failures are recorded per
/// point and do not stop the sweep; outcomes keep the input order.
pub fn sweep(
    base: &Experiment,
    points: &[SweepPoint],
    execution: Execution,
) -> Result<Vec<SweepOutcome>> {
    if points.is_empty() {
        return Err(Error::field("values", "sweep needs at least one value"));
    }
    let one = |p: &SweepPoint| SweepOutcome {
        point: *p,
        result: p.apply(base).run().map_err(|e| e.to_string()),
    };
    Ok(match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            points.par_iter().map(one).collect()
        }
        _ => points.iter().map(one).collect(),
    })
}
