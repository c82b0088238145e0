use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Chiplet, PlacementPolicy};
use crate::error::{Error, Result};
use crate::hardware::PlatformSpec;
use crate::workload::{OperatorGraph, Phase, Role};

/// The two activation hand-offs of the heterogeneous dataflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TransferPoint {
    /// Normalized attention-block output, DRAM to RRAM.
    AttnOut,
    /// Feed-forward output, RRAM to DRAM.
    FfnOut,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferEdge {
    pub producer: u32,
    pub consumer: u32,
    pub bytes: u64,
    pub point: TransferPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub policy: PlacementPolicy,
    pub chiplets: Vec<Chiplet>,
    pub transfers: Vec<TransferEdge>,
}

impl Placement {
    pub fn chiplet(&self, id: u32) -> Chiplet {
        self.chiplets[id as usize]
    }

    /// Link bytes of transfers whose consumer belongs to decode step `t`.
    pub fn step_transfer_bytes(&self, graph: &OperatorGraph, t: u32) -> u64 {
        self.transfers
            .iter()
            .filter(|e| {
                let c = graph.node(e.consumer);
                c.phase == Phase::DecodeStep && c.step == t
            })
            .map(|e| e.bytes)
            .sum()
    }
}

fn chiplet_for(role: Role, policy: PlacementPolicy) -> Chiplet {
    match policy {
        PlacementPolicy::Heterogeneous if role.is_ffn() => Chiplet::RramNmp,
        _ => Chiplet::DramNmp,
    }
}

/// Assigns every kernel to a chiplet and derives the cross-chiplet edges.
pub fn place(
    graph: &OperatorGraph,
    platform: &PlatformSpec,
    policy: PlacementPolicy,
) -> Result<Placement> {
    let chiplets: Vec<Chiplet> = graph
        .nodes
        .iter()
        .map(|n| chiplet_for(n.role, policy))
        .collect();
    if policy == PlacementPolicy::Heterogeneous {
        let ffn = super::layout::collect_weights(graph)
            .into_iter()
            .filter(|(k, _)| k.role.is_ffn())
            .map(|(_, b)| b)
            .sum::<u64>();
        let cap = platform.rram.capacity_bytes();
        if ffn > cap {
            return Err(Error::Capacity {
                what: "RRAM (feed-forward weights)".into(),
                overflow_bytes: ffn - cap,
            });
        }
    }
    let transfers = transfer_edges(graph, &chiplets);
    Ok(Placement {
        policy,
        chiplets,
        transfers,
    })
}

pub(crate) fn transfer_edges(graph: &OperatorGraph, chiplets: &[Chiplet]) -> Vec<TransferEdge> {
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    for node in &graph.nodes {
        for op in &node.operand_shapes {
            let Some(src) = op.source else { continue };
            if chiplets[src as usize] == chiplets[node.id as usize] || !seen.insert((src, node.id))
            {
                continue;
            }
            let point = match graph.node(src).role {
                Role::FfnNorm => TransferPoint::AttnOut,
                Role::FfnDownBias => TransferPoint::FfnOut,
                _ => TransferPoint::Other,
            };
            edges.push(TransferEdge {
                producer: src,
                consumer: node.id,
                bytes: op.shape.bytes(),
                point,
            });
        }
    }
    edges
}
