//! Chiplet and link parameters plus the quantities derived from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapper::PlacementPolicy;

/// Which layer of a tier stands in for the whole tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatencyPolicy {
    WorstLayer,
    MeanLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RramAccess {
    Read,
    Write,
}

/// Fraction of peak power drawn while a chiplet is busy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ActivityModel {
    /// Tracks the compute utilization of the running unit.
    Utilization,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DramChipletSpec {
    pub layers: u32,
    pub tiers: u32,
    pub tier_capacity_bytes: u64,
    pub channels: u32,
    pub banks_per_channel: u32,
    pub row_buffer_bits: u32,
    pub mat_rows: u32,
    pub mat_cols: u32,
    pub energy_pj_per_bit: f64,
    pub latency_base_ns: f64,
    pub latency_slope_ns: f64,
    pub latency_policy: LatencyPolicy,
    pub pus: u32,
    pub pes_per_pu: u32,
    pub macs_per_pe: [u32; 2],
    pub sfpe_simd_width: u32,
    pub clock_ghz: f64,
    pub peak_flops: f64,
    pub peak_power_w: f64,
    pub shared_mem_bytes_per_pu: u32,
    pub pe_buffer_bytes: u32,
    pub sram_bits: u32,
    pub io_bits_per_channel: u32,
    /// Width of the vertical path between the stack and the logic die,
    /// per channel.
    pub internal_bus_bits: u32,
    /// Row activations overlapped while streaming a tensor.
    pub burst_parallelism: f64,
    pub gemm_utilization: f64,
    pub sfpe_utilization: f64,
    pub idle_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RramChipletSpec {
    pub layers: u32,
    pub controllers: u32,
    pub channels_per_controller: u32,
    pub tiles_per_channel: u32,
    pub units_per_tile: u32,
    pub unit_rows: u32,
    pub unit_cols: u32,
    pub read_latency_ns: f64,
    pub write_latency_ns: f64,
    pub read_energy_pj_per_bit: f64,
    pub write_energy_pj_per_bit: f64,
    /// Declared capacity of one device layer.
    pub capacity_bytes_per_layer: u64,
    pub controller_bus_bits: u32,
    pub peak_bw_bytes_per_s: f64,
    pub pus: u32,
    pub pes_per_pu: u32,
    pub macs_per_pe: [u32; 2],
    pub clock_ghz: f64,
    pub peak_flops: f64,
    pub peak_power_w: f64,
    pub sram_bytes: u64,
    pub endurance_writes_per_cell: u64,
    /// Elementwise lanes per PU reducer, used for bias and activation.
    pub reducer_lanes: u32,
    pub gemm_utilization: f64,
    pub idle_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub bandwidth_bytes_per_s: f64,
    pub energy_pj_per_bit: f64,
    pub latency_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformSpec {
    pub name: String,
    pub dram: DramChipletSpec,
    pub rram: RramChipletSpec,
    pub link: LinkSpec,
    pub dram_die_area_mm2: f64,
    pub rram_die_area_mm2: f64,
    pub activity: ActivityModel,
    pub default_policy: PlacementPolicy,
}

/// Organization-derived peak compared against the declared one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakCheck {
    pub derived_flops: f64,
    pub declared_flops: f64,
    pub relative_diff: f64,
    pub mismatch: bool,
}

const PEAK_MISMATCH_TOLERANCE: f64 = 0.05;

fn peak_check(pus: u32, pes: u32, macs: [u32; 2], clock_ghz: f64, declared: f64) -> PeakCheck {
    let derived = pus as f64 * pes as f64 * (macs[0] * macs[1]) as f64 * 2.0 * clock_ghz * 1e9;
    let relative_diff = if declared > 0.0 {
        (derived - declared).abs() / declared
    } else {
        f64::INFINITY
    };
    PeakCheck {
        derived_flops: derived,
        declared_flops: declared,
        relative_diff,
        mismatch: relative_diff > PEAK_MISMATCH_TOLERANCE,
    }
}

impl DramChipletSpec {
    pub fn layers_per_tier(&self) -> u32 {
        self.layers / self.tiers
    }

    pub fn layer_latency_ns(&self, layer: u32) -> f64 {
        self.latency_base_ns + self.latency_slope_ns * layer as f64
    }

    pub fn tier_access_latency_ns(&self, tier: usize, policy: LatencyPolicy) -> Result<f64> {
        if tier >= self.tiers as usize {
            return Err(Error::TierOutOfRange {
                tier,
                tiers: self.tiers as usize,
            });
        }
        let per = self.layers_per_tier() as f64;
        let first = tier as f64 * per;
        let layer = match policy {
            LatencyPolicy::WorstLayer => first + per - 1.0,
            LatencyPolicy::MeanLayer => first + (per - 1.0) / 2.0,
        };
        Ok(self.latency_base_ns + self.latency_slope_ns * layer)
    }

    /// Latency of `tier` under the configured policy. Panics on an invalid tier.
    pub fn tier_latency_ns(&self, tier: usize) -> f64 {
        self.tier_access_latency_ns(tier, self.latency_policy)
            .expect("tier index checked by caller")
    }

    pub fn access_energy_j(&self, bits: u64) -> f64 {
        bits as f64 * self.energy_pj_per_bit * 1e-12
    }

    pub fn peak_flops_check(&self) -> PeakCheck {
        peak_check(
            self.pus,
            self.pes_per_pu,
            self.macs_per_pe,
            self.clock_ghz,
            self.peak_flops,
        )
    }

    pub fn total_tier_capacity_bytes(&self) -> u64 {
        self.tier_capacity_bytes * self.tiers as u64
    }

    /// Capacity implied by the bank organization (one mat per bank per layer).
    pub fn organization_capacity_bytes(&self) -> u64 {
        self.channels as u64
            * self.banks_per_channel as u64
            * self.layers as u64
            * self.mat_rows as u64
            * self.mat_cols as u64
            / 8
    }

    /// Streaming bandwidth between the stack and the NMP logic.
    pub fn internal_bw_bytes_per_s(&self) -> f64 {
        self.channels as f64 * self.internal_bus_bits as f64 * self.clock_ghz * 1e9 / 8.0
    }

    /// External data I/O bandwidth (64 bit per channel).
    pub fn io_bw_bytes_per_s(&self) -> f64 {
        self.channels as f64 * self.io_bits_per_channel as f64 * self.clock_ghz * 1e9 / 8.0
    }

    pub fn row_buffer_bytes(&self) -> u64 {
        self.row_buffer_bits as u64 / 8
    }

    /// Time to stream `bytes` from `tier`: bandwidth term plus one tier
    /// latency per group of `burst_parallelism` row-buffer bursts.
    pub fn memory_ns(&self, bytes: u64, tier: usize) -> f64 {
        if bytes == 0 {
            return 0.0;
        }
        let burst = self.row_buffer_bytes() as f64 * self.burst_parallelism;
        let rounds = (bytes as f64 / burst).ceil();
        bytes as f64 / self.internal_bw_bytes_per_s() * 1e9 + rounds * self.tier_latency_ns(tier)
    }

    pub fn sfpe_ns(&self, elements: u64) -> f64 {
        elements as f64 / (self.sfpe_simd_width as f64 * self.clock_ghz * self.sfpe_utilization)
    }

    pub fn gemm_ns(&self, flops: u64) -> f64 {
        flops as f64 / (self.peak_flops * self.gemm_utilization) * 1e9
    }
}

impl RramChipletSpec {
    pub fn access_energy_j(&self, bits: u64, kind: RramAccess) -> f64 {
        let pj = match kind {
            RramAccess::Read => self.read_energy_pj_per_bit,
            RramAccess::Write => self.write_energy_pj_per_bit,
        };
        bits as f64 * pj * 1e-12
    }

    pub fn peak_flops_check(&self) -> PeakCheck {
        peak_check(
            self.pus,
            self.pes_per_pu,
            self.macs_per_pe,
            self.clock_ghz,
            self.peak_flops,
        )
    }

    pub fn derived_bw_bytes_per_s(&self) -> f64 {
        self.controllers as f64 * self.controller_bus_bits as f64 * self.clock_ghz * 1e9 / 8.0
    }

    /// Capacity implied by the array organization; this is what placement uses.
    pub fn organization_capacity_bytes(&self) -> u64 {
        self.controllers as u64
            * self.channels_per_controller as u64
            * self.tiles_per_channel as u64
            * self.units_per_tile as u64
            * self.unit_rows as u64
            * self.unit_cols as u64
            / 8
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.organization_capacity_bytes()
    }

    pub fn memory_ns(&self, bytes: u64) -> f64 {
        if bytes == 0 {
            return 0.0;
        }
        bytes as f64 / self.peak_bw_bytes_per_s * 1e9 + self.read_latency_ns
    }

    pub fn write_ns(&self, bytes: u64) -> f64 {
        if bytes == 0 {
            return 0.0;
        }
        bytes as f64 / self.peak_bw_bytes_per_s * 1e9 + self.write_latency_ns
    }

    pub fn gemm_ns(&self, flops: u64) -> f64 {
        flops as f64 / (self.peak_flops * self.gemm_utilization) * 1e9
    }

    /// Elementwise work executed on the PU reducers.
    pub fn reducer_ns(&self, elements: u64) -> f64 {
        elements as f64 / (self.pus as f64 * self.reducer_lanes as f64 * self.clock_ghz)
    }
}

impl LinkSpec {
    /// `(ns, joules)` for moving `bytes` across the link.
    pub fn transfer(&self, bytes: u64) -> (f64, f64) {
        let ns = self.latency_ns + bytes as f64 / self.bandwidth_bytes_per_s * 1e9;
        (ns, self.energy_j(bytes))
    }

    pub fn energy_j(&self, bytes: u64) -> f64 {
        bytes as f64 * 8.0 * self.energy_pj_per_bit * 1e-12
    }
}

/// Result of comparing declared capacities against the organizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityCheck {
    pub dram_tiers_bytes: u64,
    pub dram_organization_bytes: u64,
    pub dram_consistent: bool,
    pub rram_declared_per_layer_bytes: u64,
    pub rram_organization_bytes: u64,
    pub rram_consistent: bool,
}

impl PlatformSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: PlatformSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("platform serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dram;
        let r = &self.rram;
        let l = &self.link;
        if d.tiers == 0 || d.layers == 0 || !d.layers.is_multiple_of(d.tiers) {
            return Err(Error::field("dram.tiers", "must evenly divide dram.layers"));
        }
        let positive = [
            ("dram.clock_ghz", d.clock_ghz),
            ("dram.peak_flops", d.peak_flops),
            ("dram.gemm_utilization", d.gemm_utilization),
            ("dram.sfpe_utilization", d.sfpe_utilization),
            ("dram.burst_parallelism", d.burst_parallelism),
            ("rram.clock_ghz", r.clock_ghz),
            ("rram.peak_flops", r.peak_flops),
            ("rram.peak_bw_bytes_per_s", r.peak_bw_bytes_per_s),
            ("rram.gemm_utilization", r.gemm_utilization),
            ("link.bandwidth_bytes_per_s", l.bandwidth_bytes_per_s),
            ("dram_die_area_mm2", self.dram_die_area_mm2),
            ("rram_die_area_mm2", self.rram_die_area_mm2),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::field(field, "must be positive"));
            }
        }
        let non_negative = [
            ("dram.energy_pj_per_bit", d.energy_pj_per_bit),
            ("dram.latency_base_ns", d.latency_base_ns),
            ("dram.latency_slope_ns", d.latency_slope_ns),
            ("dram.peak_power_w", d.peak_power_w),
            ("dram.idle_factor", d.idle_factor),
            ("rram.read_energy_pj_per_bit", r.read_energy_pj_per_bit),
            ("rram.read_latency_ns", r.read_latency_ns),
            ("rram.peak_power_w", r.peak_power_w),
            ("rram.idle_factor", r.idle_factor),
            ("link.energy_pj_per_bit", l.energy_pj_per_bit),
            ("link.latency_ns", l.latency_ns),
        ];
        for (field, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::field(field, "must be non-negative"));
            }
        }
        if d.gemm_utilization > 1.0 || d.sfpe_utilization > 1.0 || r.gemm_utilization > 1.0 {
            return Err(Error::field("utilization", "must not exceed 1"));
        }
        if r.write_energy_pj_per_bit <= r.read_energy_pj_per_bit {
            return Err(Error::field(
                "rram.write_energy_pj_per_bit",
                "must exceed read energy",
            ));
        }
        if r.write_latency_ns <= r.read_latency_ns {
            return Err(Error::field(
                "rram.write_latency_ns",
                "must exceed read latency",
            ));
        }
        if d.internal_bus_bits == 0 || d.row_buffer_bits < 8 || d.sfpe_simd_width == 0 {
            return Err(Error::field(
                "dram",
                "bus, row buffer and SIMD widths must be positive",
            ));
        }
        if r.pus == 0 || r.reducer_lanes == 0 {
            return Err(Error::field("rram.reducer_lanes", "must be positive"));
        }
        if let ActivityModel::Fixed(a) = self.activity {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::field("activity", "fixed factor must be in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn capacity_check(&self) -> CapacityCheck {
        let dram_tiers_bytes = self.dram.total_tier_capacity_bytes();
        let dram_organization_bytes = self.dram.organization_capacity_bytes();
        let rram_org = self.rram.organization_capacity_bytes();
        CapacityCheck {
            dram_tiers_bytes,
            dram_organization_bytes,
            dram_consistent: dram_tiers_bytes <= dram_organization_bytes,
            rram_declared_per_layer_bytes: self.rram.capacity_bytes_per_layer,
            rram_organization_bytes: rram_org,
            rram_consistent: self.rram.capacity_bytes_per_layer * self.rram.layers as u64
                == rram_org,
        }
    }

    /// Human-readable notes about known inconsistencies in the parameters.
    pub fn cross_check_notes(&self) -> Vec<String> {
        let mut notes = Vec::new();
        for (name, c) in [
            ("dram", self.dram.peak_flops_check()),
            ("rram", self.rram.peak_flops_check()),
        ] {
            if c.mismatch {
                notes.push(format!(
                    "{name} declared peak {:.3e} FLOPS differs from organization-derived {:.3e} by {:.0}%; declared value used",
                    c.declared_flops,
                    c.derived_flops,
                    c.relative_diff * 100.0
                ));
            }
        }
        let cap = self.capacity_check();
        if !cap.dram_consistent {
            notes.push("dram tier capacities exceed the bank organization".into());
        }
        if !cap.rram_consistent {
            notes.push(format!(
                "rram per-layer capacity {} B x {} layers differs from organization {} B",
                cap.rram_declared_per_layer_bytes, self.rram.layers, cap.rram_organization_bytes
            ));
        }
        let bw = self.rram.derived_bw_bytes_per_s();
        if ((bw - self.rram.peak_bw_bytes_per_s) / self.rram.peak_bw_bytes_per_s).abs() > 1e-9 {
            notes.push(format!(
                "rram declared bandwidth {:.3e} B/s differs from controller-derived {bw:.3e} B/s",
                self.rram.peak_bw_bytes_per_s
            ));
        }
        notes
    }

    pub fn idle_factors(&self) -> [f64; 2] {
        [self.dram.idle_factor, self.rram.idle_factor]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn dram() -> DramChipletSpec {
        presets::heterogeneous().dram
    }

    #[test]
    fn layer_zero_and_top_latency() {
        let d = dram();
        assert_eq!(d.layer_latency_ns(0), 3.0);
        assert!((d.layer_latency_ns(199) - 162.2).abs() < 1e-9);
    }

    #[test]
    fn worst_layer_tier_latency() {
        let d = dram();
        let t0 = d
            .tier_access_latency_ns(0, LatencyPolicy::WorstLayer)
            .unwrap();
        let t4 = d
            .tier_access_latency_ns(4, LatencyPolicy::WorstLayer)
            .unwrap();
        assert!((t0 - (3.0 + 0.8 * 39.0)).abs() < 1e-9);
        assert!((t4 - (3.0 + 0.8 * 199.0)).abs() < 1e-9);
    }

    #[test]
    fn mean_layer_tier_latency() {
        let d = dram();
        let t1 = d
            .tier_access_latency_ns(1, LatencyPolicy::MeanLayer)
            .unwrap();
        assert!((t1 - (3.0 + 0.8 * 59.5)).abs() < 1e-9);
    }

    #[test]
    fn tier_out_of_range() {
        let err = dram()
            .tier_access_latency_ns(5, LatencyPolicy::MeanLayer)
            .unwrap_err();
        assert!(matches!(err, Error::TierOutOfRange { tier: 5, tiers: 5 }));
    }

    #[test]
    fn dram_energy() {
        let d = dram();
        assert_eq!(d.access_energy_j(0), 0.0);
        assert!((d.access_energy_j(8192) - 8192.0 * 0.429e-12).abs() < 1e-24);
    }

    #[test]
    fn rram_energy() {
        let r = presets::heterogeneous().rram;
        assert!((r.access_energy_j(1, RramAccess::Read) - 0.4e-12).abs() < 1e-27);
        assert!((r.access_energy_j(1, RramAccess::Write) - 1.33e-12).abs() < 1e-27);
        assert!((r.access_energy_j(8192, RramAccess::Write) - 1.0895e-8).abs() < 1e-12);
    }

    #[test]
    fn zero_clock_gives_zero_flops() {
        let mut d = dram();
        d.clock_ghz = 0.0;
        assert_eq!(d.peak_flops_check().derived_flops, 0.0);
    }

    #[test]
    fn link_transfer_of_nothing_is_latency_only() {
        let l = presets::heterogeneous().link;
        let (ns, j) = l.transfer(0);
        assert_eq!(ns, l.latency_ns);
        assert_eq!(j, 0.0);
    }

    #[test]
    fn link_serialization_of_one_page() {
        let l = presets::heterogeneous().link;
        let (ns, _) = l.transfer(4096);
        assert!((ns - l.latency_ns - 32.0).abs() < 1e-9);
    }

    #[test]
    fn saturated_link_draws_one_watt() {
        let l = presets::heterogeneous().link;
        let bytes_per_s = l.bandwidth_bytes_per_s as u64;
        assert!((l.energy_j(bytes_per_s) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn write_cheaper_than_read_is_rejected() {
        let mut p = presets::heterogeneous();
        p.rram.write_energy_pj_per_bit = 0.1;
        assert!(p.validate().is_err());
    }

    #[test]
    fn unknown_key_rejected() {
        let mut v: serde_json::Value =
            serde_json::from_str(&presets::heterogeneous().to_json()).unwrap();
        v["dram"]["tier_capcity"] = 1.into();
        let err = PlatformSpec::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("tier_capcity"), "{err}");
    }
}
