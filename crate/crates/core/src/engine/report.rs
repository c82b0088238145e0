use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hardware::PeakCheck;
use crate::workload::Phase;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub dram_dynamic_j: f64,
    pub rram_dynamic_j: f64,
    pub link_j: f64,
    pub dram_static_j: f64,
    pub rram_static_j: f64,
    pub migration_j: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.dram_dynamic_j
            + self.rram_dynamic_j
            + self.link_j
            + self.dram_static_j
            + self.rram_static_j
            + self.migration_j
    }
}

/// Latency, energy and traffic of one simulated inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub model: String,
    pub platform: String,
    pub policy: String,
    pub prompt_text_tokens: u32,
    pub visual_tokens: u32,
    pub output_tokens: u32,
    pub kernels: u64,
    pub units: u64,

    pub total_latency_ns: f64,
    pub phase_latency_ns: BTreeMap<Phase, f64>,
    pub kind_latency_ns: BTreeMap<String, f64>,
    pub kind_energy_j: BTreeMap<String, f64>,
    pub decode_step_ns: Vec<f64>,
    pub steady_state_decode_ns_per_token: f64,
    pub throughput_token_per_s: f64,
    pub avg_power_w: f64,
    pub energy_per_inference_j: f64,
    pub token_per_j: f64,
    pub energy: EnergyBreakdown,

    pub link_bytes_total: u64,
    pub link_bytes_by_phase: BTreeMap<Phase, u64>,
    pub dram_bits_accessed: u64,
    pub rram_bits_read: u64,
    pub rram_bits_written: u64,
    pub rram_preload_bytes: u64,
    pub kv_rebalances: u32,
    pub kv_migrations: u64,
    pub kv_migration_bytes: u64,
    pub kv_offloaded_blocks: u64,
    pub kv_max_rram_write_count: u32,
    pub kv_tier_inversions_after_rebalance: u64,

    pub dram_busy_ns: f64,
    pub rram_busy_ns: f64,
    pub link_busy_ns: f64,
    pub max_achieved_flops_dram: f64,
    pub max_achieved_flops_rram: f64,
    pub dram_peak_check: PeakCheck,
    pub rram_peak_check: PeakCheck,
    pub notes: Vec<String>,
}

impl SimReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Share of the total latency spent in each phase.
pub fn phase_fractions(report: &SimReport) -> Result<BTreeMap<Phase, f64>> {
    let total: f64 = report.phase_latency_ns.values().sum();
    if report.phase_latency_ns.is_empty() || total <= 0.0 {
        return Err(Error::EmptyReport);
    }
    Ok(report
        .phase_latency_ns
        .iter()
        .map(|(p, ns)| (*p, ns / total))
        .collect())
}

/// Fraction of time in the language-model backbone (prefill and decode).
pub fn backbone_fraction(report: &SimReport) -> Result<f64> {
    Ok(phase_fractions(report)?
        .iter()
        .filter(|(p, _)| p.is_backbone())
        .map(|(_, f)| f)
        .sum())
}
