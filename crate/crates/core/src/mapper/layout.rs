use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{PlacementPolicy, Residence};
use crate::error::{Error, Result};
use crate::hardware::PlatformSpec;
use crate::workload::{KernelKind, OperandClass, OperatorGraph, Role};

/// Identifies one weight matrix: the kernel role that reads it plus the
/// layer (or encoder block, or connector stage) index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WeightKey {
    pub role: Role,
    pub layer: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub residence: Residence,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightPlacement {
    pub key: WeightKey,
    pub bytes: u64,
    pub spans: Vec<Span>,
}

/// Static placement of the GEMM weights. Biases and norm parameters are
/// small and are not tracked: they are read from Tier-0, or from RRAM when
/// their kernel runs there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightLayout {
    /// Sorted by key.
    pub entries: Vec<WeightPlacement>,
    pub dram_weight_bytes: Vec<u64>,
    pub rram_weight_bytes: u64,
    pub kv_reserved_bytes: u64,
}

impl WeightLayout {
    pub fn lookup(&self, key: WeightKey) -> Option<&WeightPlacement> {
        self.entries
            .binary_search_by(|e| e.key.cmp(&key))
            .ok()
            .map(|i| &self.entries[i])
    }
}

/// Bytes of every GEMM weight matrix in the graph.
pub fn collect_weights(graph: &OperatorGraph) -> BTreeMap<WeightKey, u64> {
    let end = graph
        .step_starts
        .first()
        .copied()
        .unwrap_or(graph.nodes.len() as u32) as usize;
    let mut out = BTreeMap::new();
    for node in &graph.nodes[..end] {
        if node.kind != KernelKind::Gemm {
            continue;
        }
        for op in node
            .operand_shapes
            .iter()
            .filter(|o| o.class == OperandClass::Weight)
        {
            out.insert(
                WeightKey {
                    role: node.role,
                    layer: node.layer_index,
                },
                op.shape.bytes(),
            );
        }
    }
    out
}

struct Tiers {
    cap: u64,
    occupied: Vec<u64>,
}

impl Tiers {
    fn fill(&mut self, mut bytes: u64, top_down: bool) -> Vec<Span> {
        let n = self.occupied.len();
        let mut spans = Vec::new();
        for i in 0..n {
            let t = if top_down { n - 1 - i } else { i };
            let take = bytes.min(self.cap - self.occupied[t]);
            if take > 0 {
                self.occupied[t] += take;
                spans.push(Span {
                    residence: Residence::DramTier(t as u8),
                    bytes: take,
                });
                bytes -= take;
            }
            if bytes == 0 {
                break;
            }
        }
        debug_assert_eq!(bytes, 0, "caller checked total capacity");
        spans
    }
}

fn is_backbone_attention(role: Role) -> bool {
    matches!(
        role,
        Role::QProj | Role::KProj | Role::VProj | Role::OutProj
    )
}

/// Lays weights out across DRAM tiers and RRAM.
///
/// Tier-0 upward: space for the KV cache at maximum context, then attention
/// projections layer by layer, the LM head, and (DRAM-only) the feed-forward
/// weights. Encoder and connector weights fill from the top tier down.
pub fn layout_weights(
    graph: &OperatorGraph,
    platform: &PlatformSpec,
    policy: PlacementPolicy,
    kv_block_tokens: u32,
) -> Result<WeightLayout> {
    let weights = collect_weights(graph);
    let dram = &platform.dram;
    let mut entries: BTreeMap<WeightKey, Vec<Span>> = BTreeMap::new();

    let on_rram = |k: &WeightKey| policy == PlacementPolicy::Heterogeneous && k.role.is_ffn();
    let rram_weight_bytes: u64 = weights
        .iter()
        .filter(|(k, _)| on_rram(k))
        .map(|(_, b)| b)
        .sum();
    if rram_weight_bytes > platform.rram.capacity_bytes() {
        return Err(Error::Capacity {
            what: "RRAM (feed-forward weights)".into(),
            overflow_bytes: rram_weight_bytes - platform.rram.capacity_bytes(),
        });
    }
    for (k, &b) in weights.iter().filter(|(k, _)| on_rram(k)) {
        entries.insert(
            *k,
            vec![Span {
                residence: Residence::Rram,
                bytes: b,
            }],
        );
    }

    let dram_total: u64 = weights
        .iter()
        .filter(|(k, _)| !on_rram(k))
        .map(|(_, b)| b)
        .sum();
    let capacity = dram.total_tier_capacity_bytes();
    if dram_total > capacity {
        return Err(Error::Capacity {
            what: "DRAM (weights)".into(),
            overflow_bytes: dram_total - capacity,
        });
    }
    let max_ctx =
        graph.budget.max_context().div_ceil(kv_block_tokens) as u64 * kv_block_tokens as u64;
    let kv_need = max_ctx * graph.kv_bytes_per_token_per_layer * graph.num_layers as u64;
    let kv_reserved_bytes = kv_need.min(capacity - dram_total);

    let mut tiers = Tiers {
        cap: dram.tier_capacity_bytes,
        occupied: vec![0; dram.tiers as usize],
    };
    let reserved: Vec<u64> = {
        tiers.fill(kv_reserved_bytes, false);
        tiers.occupied.clone()
    };

    for (k, &b) in weights
        .iter()
        .filter(|(k, _)| !on_rram(k) && !is_backbone_weight(k.role))
    {
        entries.insert(*k, tiers.fill(b, true));
    }
    let mut bottom: Vec<(WeightKey, u64)> = weights
        .iter()
        .filter(|(k, _)| !on_rram(k) && is_backbone_weight(k.role))
        .map(|(k, b)| (*k, *b))
        .collect();
    // Attention projections first (by layer), then LM head, then FFN.
    bottom.sort_by_key(|(k, _)| {
        let class = if is_backbone_attention(k.role) {
            0
        } else if k.role == Role::LmHead {
            1
        } else {
            2
        };
        (class, k.layer, k.role)
    });
    for (k, b) in bottom {
        entries.insert(k, tiers.fill(b, false));
    }

    let dram_weight_bytes = tiers
        .occupied
        .iter()
        .zip(&reserved)
        .map(|(o, r)| o - r)
        .collect();
    Ok(WeightLayout {
        entries: entries
            .into_iter()
            .map(|(key, spans)| WeightPlacement {
                key,
                bytes: spans.iter().map(|s| s.bytes).sum(),
                spans,
            })
            .collect(),
        dram_weight_bytes,
        rram_weight_bytes,
        kv_reserved_bytes,
    })
}

fn is_backbone_weight(role: Role) -> bool {
    is_backbone_attention(role) || role == Role::LmHead || role.is_ffn()
}
