//! Roofline timing and dynamic energy of kernels, fused groups and transfers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hardware::{LinkSpec, PlatformSpec, RramAccess};
use crate::mapper::{Chiplet, KvCacheState, MigrationCost, Residence, WeightKey, WeightLayout};
use crate::workload::{KernelKind, KernelNode, OperandClass};

/// Upper bound on DRAM tiers handled by the cost model.
pub const MAX_TIERS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelCost {
    pub compute_ns: f64,
    pub memory_ns: f64,
    /// `max(compute_ns, memory_ns)`: compute and streaming overlap.
    pub chosen_ns: f64,
    pub dynamic_energy_j: f64,
    /// `None` for link transfers.
    pub chiplet: Option<Chiplet>,
}

/// Work gathered from the members of one unit before pricing.
#[derive(Debug, Clone, Default)]
pub(crate) struct Work {
    pub compute_ns: f64,
    pub flops: u64,
    pub dram_tier_bytes: [u64; MAX_TIERS],
    pub rram_read_bytes: u64,
    /// Offloaded KV bytes fetched from RRAM over the link.
    pub offload_bytes: u64,
}

impl Work {
    fn add(&mut self, residence: Residence, bytes: u64) {
        match residence {
            Residence::DramTier(t) => self.dram_tier_bytes[t as usize] += bytes,
            Residence::Rram => self.offload_bytes += bytes,
        }
    }
}

/// Counters a priced unit contributes to the report.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Traffic {
    pub dram_bits: u64,
    pub rram_read_bits: u64,
    pub link_bytes: u64,
    pub dram_j: f64,
    pub rram_j: f64,
    pub link_j: f64,
}

pub(crate) fn price(
    work: &Work,
    chiplet: Chiplet,
    platform: &PlatformSpec,
) -> (KernelCost, Traffic) {
    let mut t = Traffic::default();
    let memory_ns = match chiplet {
        Chiplet::DramNmp => {
            let dram = &platform.dram;
            let mut ns = 0.0;
            let mut bytes = 0;
            for (tier, &b) in work
                .dram_tier_bytes
                .iter()
                .enumerate()
                .take(dram.tiers as usize)
            {
                ns += dram.memory_ns(b, tier);
                bytes += b;
            }
            t.dram_bits = bytes * 8;
            t.dram_j = dram.access_energy_j(t.dram_bits);
            if work.offload_bytes > 0 {
                let (link_ns, link_j) = platform.link.transfer(work.offload_bytes);
                ns += platform.rram.memory_ns(work.offload_bytes) + link_ns;
                t.rram_read_bits = work.offload_bytes * 8;
                t.rram_j = platform
                    .rram
                    .access_energy_j(t.rram_read_bits, RramAccess::Read);
                t.link_bytes = work.offload_bytes;
                t.link_j = link_j;
            }
            ns
        }
        Chiplet::RramNmp => {
            t.rram_read_bits = work.rram_read_bytes * 8;
            t.rram_j = platform
                .rram
                .access_energy_j(t.rram_read_bits, RramAccess::Read);
            platform.rram.memory_ns(work.rram_read_bytes)
        }
    };
    let cost = KernelCost {
        compute_ns: work.compute_ns,
        memory_ns,
        chosen_ns: work.compute_ns.max(memory_ns),
        dynamic_energy_j: t.dram_j + t.rram_j + t.link_j,
        chiplet: Some(chiplet),
    };
    (cost, t)
}

/// Link transfer of `bytes`: `(ns, joules)`.
pub fn time_link_transfer(bytes: u64, link: &LinkSpec) -> (f64, f64) {
    link.transfer(bytes)
}

pub(crate) fn link_cost(bytes: u64, link: &LinkSpec) -> (KernelCost, Traffic) {
    let (ns, j) = link.transfer(bytes);
    let cost = KernelCost {
        compute_ns: 0.0,
        memory_ns: ns,
        chosen_ns: ns,
        dynamic_energy_j: j,
        chiplet: None,
    };
    (
        cost,
        Traffic {
            link_bytes: bytes,
            link_j: j,
            ..Traffic::default()
        },
    )
}

fn compute_ns(
    node: &KernelNode,
    chiplet: Chiplet,
    on_reducer: bool,
    platform: &PlatformSpec,
) -> Result<f64> {
    Ok(match (node.kind, chiplet) {
        (KernelKind::Gemm, Chiplet::DramNmp) => platform.dram.gemm_ns(node.flops),
        (KernelKind::Gemm, Chiplet::RramNmp) => platform.rram.gemm_ns(node.flops),
        (k, Chiplet::DramNmp) if k.is_sfpe() => platform.dram.sfpe_ns(node.output.elements()),
        (k, Chiplet::RramNmp) if k.is_sfpe() => {
            if !on_reducer {
                return Err(Error::Mapping(format!(
                    "kernel {} ({:?}) needs a special-function unit but runs on RRAM",
                    node.id, node.role
                )));
            }
            platform.rram.reducer_ns(node.output.elements())
        }
        _ => 0.0,
    })
}

/// Where a unit's inputs and outputs live.
pub(crate) struct Residency<'a> {
    pub layout: &'a WeightLayout,
    /// True when the tensor produced by this kernel is read by the same unit.
    pub is_local: &'a dyn Fn(u32) -> bool,
    /// True when this kernel's output leaves the unit (or the graph).
    pub escapes: bool,
}

/// Adds one member kernel's compute and memory traffic to `work`.
/// Cache appends update `kv` and may push cold blocks to RRAM; that cost is
/// returned.
pub(crate) fn accumulate(
    node: &KernelNode,
    chiplet: Chiplet,
    on_reducer: bool,
    platform: &PlatformSpec,
    res: &Residency<'_>,
    kv: &mut KvCacheState,
    work: &mut Work,
) -> Result<Option<MigrationCost>> {
    work.compute_ns += compute_ns(node, chiplet, on_reducer, platform)?;
    work.flops += node.flops;
    let on_dram = chiplet == Chiplet::DramNmp;
    for op in &node.operand_shapes {
        let bytes = op.shape.bytes();
        match op.class {
            OperandClass::Weight => {
                let key = WeightKey {
                    role: node.role,
                    layer: node.layer_index,
                };
                match res
                    .layout
                    .lookup(key)
                    .filter(|_| node.kind == KernelKind::Gemm)
                {
                    Some(w) => {
                        for s in &w.spans {
                            match s.residence {
                                Residence::Rram => work.rram_read_bytes += s.bytes,
                                r => work.add(r, s.bytes),
                            }
                        }
                    }
                    None if on_dram => work.add(Residence::DramTier(0), bytes),
                    None => work.rram_read_bytes += bytes,
                }
            }
            OperandClass::KvCache => {
                let ctx = op.shape.rows / 2;
                for (r, b) in kv.read(node.layer_index, ctx) {
                    work.add(r, b);
                }
            }
            OperandClass::Activation => {
                let local = op.source.is_some_and(|s| (res.is_local)(s));
                if !local && on_dram {
                    work.add(Residence::DramTier(0), bytes);
                }
            }
        }
    }
    let mut eviction = None;
    if node.kind == KernelKind::KvAppend {
        let tokens = node.output.rows / 2;
        let out = kv.append(node.layer_index, tokens, platform)?;
        for (r, b) in out.writes {
            work.add(r, b);
        }
        eviction = out.eviction;
    } else if res.escapes && on_dram {
        work.add(Residence::DramTier(0), node.bytes_written());
    }
    Ok(eviction)
}

/// Cost of a single kernel with every operand streamed from `tier` (or from
/// RRAM when placed there) and nothing kept local.
pub fn time_kernel(
    node: &KernelNode,
    chiplet: Chiplet,
    platform: &PlatformSpec,
    tier: usize,
) -> Result<KernelCost> {
    if tier >= platform.dram.tiers as usize {
        return Err(Error::TierOutOfRange {
            tier,
            tiers: platform.dram.tiers as usize,
        });
    }
    let mut work = Work {
        compute_ns: compute_ns(node, chiplet, false, platform)?,
        flops: node.flops,
        ..Work::default()
    };
    let bytes = node.bytes_read() + node.bytes_written();
    if node.kind == KernelKind::Transfer {
        return Ok(link_cost(node.bytes_read(), &platform.link).0);
    }
    match chiplet {
        Chiplet::DramNmp => work.dram_tier_bytes[tier] = bytes,
        Chiplet::RramNmp => work.rram_read_bytes = node.bytes_read(),
    }
    Ok(price(&work, chiplet, platform).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::workload::{GemmDims, Phase, Role, TensorShape};
    use smallvec::smallvec;

    fn gemm(flops_m: u32) -> KernelNode {
        let g = GemmDims {
            batch: 1,
            m: flops_m,
            k: 1024,
            n: 1024,
        };
        KernelNode {
            id: 0,
            kind: KernelKind::Gemm,
            role: Role::QProj,
            phase: Phase::DecodeStep,
            layer_index: 0,
            step: 1,
            gemm: Some(g),
            operand_shapes: smallvec![],
            output: TensorShape::new(flops_m, 1024, 2),
            flops: g.flops(),
            deps: smallvec![],
        }
    }

    #[test]
    fn compute_bound_gemm() {
        let mut p = presets::heterogeneous();
        p.dram.gemm_utilization = 1.0;
        let mut node = gemm(1);
        node.flops = 2_048_000_000;
        node.output = TensorShape::new(1, 1, 2);
        let c = time_kernel(&node, Chiplet::DramNmp, &p, 0).unwrap();
        assert!((c.compute_ns - 1.024e6).abs() < 1e-6);
        assert_eq!(c.chosen_ns, c.compute_ns.max(c.memory_ns));
    }

    #[test]
    fn rram_streaming_rate() {
        let p = presets::heterogeneous();
        let work = Work {
            rram_read_bytes: 512_000_000_000,
            ..Work::default()
        };
        let (c, _) = price(&work, Chiplet::RramNmp, &p);
        assert!((c.memory_ns - (1e9 + p.rram.read_latency_ns)).abs() < 1e-3);
    }

    #[test]
    fn transfer_has_no_compute() {
        let p = presets::heterogeneous();
        let (c, _) = link_cost(4096, &p.link);
        assert_eq!(c.compute_ns, 0.0);
        assert!((c.chosen_ns - (p.link.latency_ns + 32.0)).abs() < 1e-9);
    }

    #[test]
    fn softmax_on_rram_outside_ffn_is_rejected() {
        let p = presets::heterogeneous();
        let mut node = gemm(1);
        node.kind = KernelKind::Softmax;
        node.gemm = None;
        assert!(matches!(
            time_kernel(&node, Chiplet::RramNmp, &p, 0),
            Err(Error::Mapping(_))
        ));
    }
}
