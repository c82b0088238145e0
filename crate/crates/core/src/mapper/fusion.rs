use serde::{Deserialize, Serialize};

use super::placement::Placement;
use super::Chiplet;
use crate::error::{Error, Result};
use crate::workload::{OperatorGraph, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FusionKind {
    FusedQkvProj,
    FusedAttnStream,
    FusedFfnAct,
    FusedNorm,
}

impl FusionKind {
    pub fn name(self) -> &'static str {
        match self {
            FusionKind::FusedQkvProj => "fused_qkv_proj",
            FusionKind::FusedAttnStream => "fused_attn_stream",
            FusionKind::FusedFfnAct => "fused_ffn_act",
            FusionKind::FusedNorm => "fused_norm",
        }
    }
}

/// A run of consecutive kernels executed as one near-memory kernel.
///
/// Members are the contiguous ids `first_member .. first_member + member_count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionGroup {
    pub id: u32,
    pub kind: FusionKind,
    pub first_member: u32,
    pub member_count: u32,
    pub chiplet: Chiplet,
    pub intermediate_bytes_kept_local: u64,
    /// Key/value tiles streamed by an attention group; 1 otherwise.
    pub tile_iterations: u32,
}

impl FusionGroup {
    pub fn members(&self) -> std::ops::Range<u32> {
        self.first_member..self.first_member + self.member_count
    }

    pub fn contains(&self, id: u32) -> bool {
        self.members().contains(&id)
    }
}

pub fn fusion_kind(role: Role) -> Option<FusionKind> {
    use Role::*;
    match role {
        QProj | QBias | KProj | KBias | VProj | VBias => Some(FusionKind::FusedQkvProj),
        KvRead | AttnScore | AttnSoftmax | AttnValue | EncAttnScore | EncAttnSoftmax
        | EncAttnValue | ConnAttnScore | ConnAttnSoftmax | ConnAttnValue => {
            Some(FusionKind::FusedAttnStream)
        }
        FfnUp | FfnUpBias | FfnAct | FfnDown | FfnDownBias | EncMlpUp | EncMlpAct | EncMlpDown => {
            Some(FusionKind::FusedFfnAct)
        }
        r if r.is_norm() => Some(FusionKind::FusedNorm),
        _ => None,
    }
}

/// Groups runs of kernels of the same layer and step into fused kernels.
///
/// A run whose members sit on different chiplets is rejected: fusion never
/// straddles the chiplet boundary.
pub fn fuse(
    graph: &OperatorGraph,
    placement: &Placement,
    tile_size: u32,
) -> Result<Vec<FusionGroup>> {
    if tile_size == 0 {
        return Err(Error::field("tile_size", "must be at least 1"));
    }
    let nodes = &graph.nodes;
    let mut groups = Vec::new();
    let mut i = 0usize;
    while i < nodes.len() {
        let head = &nodes[i];
        let Some(kind) = fusion_kind(head.role) else {
            i += 1;
            continue;
        };
        let mut j = i + 1;
        if kind != FusionKind::FusedNorm {
            while j < nodes.len() {
                let n = &nodes[j];
                let same_scope = n.phase == head.phase
                    && n.step == head.step
                    && n.layer_index == head.layer_index;
                if fusion_kind(n.role) != Some(kind) || !same_scope {
                    break;
                }
                if placement.chiplet(n.id) != placement.chiplet(head.id) {
                    return Err(Error::Mapping(format!(
                        "cannot fuse kernel {} ({:?}) with kernel {} ({:?}) across chiplets",
                        head.id,
                        placement.chiplet(head.id),
                        n.id,
                        placement.chiplet(n.id)
                    )));
                }
                j += 1;
            }
        }
        let tile_iterations = if kind == FusionKind::FusedAttnStream {
            let kv_rows = nodes[i..j]
                .iter()
                .find_map(|n| n.gemm.filter(|_| n.role.is_score()).map(|g| g.n))
                .unwrap_or(1);
            kv_rows.div_ceil(tile_size)
        } else {
            1
        };
        groups.push(FusionGroup {
            id: groups.len() as u32,
            kind,
            first_member: i as u32,
            member_count: (j - i) as u32,
            chiplet: placement.chiplet(head.id),
            intermediate_bytes_kept_local: 0,
            tile_iterations,
        });
        i = j;
    }
    fill_local_bytes(graph, &mut groups);
    Ok(groups)
}

/// Maps each kernel to its group index, `u32::MAX` for standalone kernels.
pub fn group_index(n_nodes: usize, groups: &[FusionGroup]) -> Vec<u32> {
    let mut idx = vec![u32::MAX; n_nodes];
    for (gi, g) in groups.iter().enumerate() {
        for m in g.members() {
            idx[m as usize] = gi as u32;
        }
    }
    idx
}

/// Bytes of every tensor that is produced and consumed only inside its group.
fn fill_local_bytes(graph: &OperatorGraph, groups: &mut [FusionGroup]) {
    let n = graph.nodes.len();
    let idx = group_index(n, groups);
    let mut consumed = vec![false; n];
    let mut escapes = vec![false; n];
    for node in &graph.nodes {
        for &d in &node.deps {
            consumed[d as usize] = true;
            if idx[d as usize] == u32::MAX || idx[d as usize] != idx[node.id as usize] {
                escapes[d as usize] = true;
            }
        }
    }
    for g in groups.iter_mut() {
        g.intermediate_bytes_kept_local = g
            .members()
            .filter(|&m| consumed[m as usize] && !escapes[m as usize])
            .map(|m| graph.node(m).bytes_written())
            .sum();
    }
}
