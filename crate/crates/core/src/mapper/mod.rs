//! Mapping compiler: chiplet placement, fusion, weight layout and KV tiering.

mod fusion;
mod kv;
mod layout;
mod migration;
mod placement;

use serde::{Deserialize, Serialize};

pub use fusion::{fuse, fusion_kind, group_index, FusionGroup, FusionKind};
pub use kv::{
    assign_kv, plan_blocks, tier_inversions, AppendOutcome, HotnessPolicy, KvBlock, KvBudget,
    KvCacheState, Traffic,
};
pub use layout::{collect_weights, layout_weights, Span, WeightKey, WeightLayout, WeightPlacement};
pub use migration::{migration_cost, MigrationCost};
pub use placement::{place, Placement, TransferEdge, TransferPoint};

use crate::error::{Error, Result};
use crate::hardware::PlatformSpec;
use crate::workload::OperatorGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlacementPolicy {
    /// Feed-forward kernels on RRAM, everything else on DRAM.
    Heterogeneous,
    DramOnly,
}

impl PlacementPolicy {
    pub fn name(self) -> &'static str {
        match self {
            PlacementPolicy::Heterogeneous => "het",
            PlacementPolicy::DramOnly => "dram-only",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "het" | "heterogeneous" => Ok(PlacementPolicy::Heterogeneous),
            "dram-only" | "dram_only" | "dramonly" => Ok(PlacementPolicy::DramOnly),
            other => Err(Error::field("policy", format!("unknown policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Chiplet {
    DramNmp,
    RramNmp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Residence {
    DramTier(u8),
    Rram,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapperOptions {
    pub tile_size: u32,
    pub kv_block_tokens: u32,
    /// Decode steps between KV tier rebalances.
    pub rebalance_period: u32,
    pub hotness: HotnessPolicy,
}

impl Default for MapperOptions {
    fn default() -> Self {
        MapperOptions {
            tile_size: 512,
            kv_block_tokens: 64,
            rebalance_period: 64,
            hotness: HotnessPolicy::Recency,
        }
    }
}

impl MapperOptions {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("tile_size", self.tile_size),
            ("kv_block_tokens", self.kv_block_tokens),
            ("rebalance_period", self.rebalance_period),
        ] {
            if v == 0 {
                return Err(Error::field(field, "must be at least 1"));
            }
        }
        Ok(())
    }
}

/// Identifies the graph a plan was compiled for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphFingerprint {
    pub model: String,
    pub nodes: u64,
    pub prompt_text_tokens: u32,
    pub visual_tokens: u32,
    pub output_tokens: u32,
}

impl GraphFingerprint {
    pub fn of(graph: &OperatorGraph) -> Self {
        GraphFingerprint {
            model: graph.model.clone(),
            nodes: graph.len() as u64,
            prompt_text_tokens: graph.budget.prompt_text_tokens,
            visual_tokens: graph.budget.visual_tokens,
            output_tokens: graph.budget.output_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingPlan {
    pub graph: GraphFingerprint,
    pub options: MapperOptions,
    pub placement: Placement,
    pub fusion_groups: Vec<FusionGroup>,
    pub weight_layout: WeightLayout,
    /// Static assignment of the cache at maximum context.
    pub kv_assignment: Vec<KvBlock>,
    pub kv_budget: KvBudget,
    pub expected_cross_chiplet_bytes_per_step: u64,
}

impl MappingPlan {
    pub fn policy(&self) -> PlacementPolicy {
        self.placement.policy
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Confirms that a (possibly re-ingested) plan fits `graph`.
    pub fn check_against(&self, graph: &OperatorGraph) -> Result<()> {
        let fp = GraphFingerprint::of(graph);
        if fp != self.graph {
            return Err(Error::PlanMismatch(format!(
                "plan was compiled for {:?}, graph is {:?}",
                self.graph, fp
            )));
        }
        if self.placement.chiplets.len() != graph.len() {
            return Err(Error::PlanMismatch(
                "placement length differs from kernel count".into(),
            ));
        }
        let mut covered = 0u64;
        let mut next = 0u32;
        for g in &self.fusion_groups {
            if g.member_count == 0
                || g.first_member < next
                || g.members().end as usize > graph.len()
            {
                return Err(Error::PlanMismatch(format!(
                    "fusion group {} out of order or range",
                    g.id
                )));
            }
            next = g.members().end;
            covered += g.member_count as u64;
            for m in g.members() {
                if self.placement.chiplet(m) != g.chiplet {
                    return Err(Error::Mapping(format!(
                        "fusion group {} spans chiplets at kernel {m}",
                        g.id
                    )));
                }
            }
        }
        debug_assert!(covered <= graph.len() as u64);
        let expected = placement::transfer_edges(graph, &self.placement.chiplets);
        if expected != self.placement.transfers {
            return Err(Error::PlanMismatch(
                "transfer edges do not match placement".into(),
            ));
        }
        check_sfpe_placement(graph, &self.placement, &self.fusion_groups)
    }
}

/// RRAM has no special-function unit: elementwise, norm and softmax kernels
/// may only run there as part of a fused feed-forward kernel (on the reducer).
fn check_sfpe_placement(
    graph: &OperatorGraph,
    placement: &Placement,
    groups: &[FusionGroup],
) -> Result<()> {
    let idx = group_index(graph.len(), groups);
    for node in &graph.nodes {
        if placement.chiplet(node.id) != Chiplet::RramNmp || !node.kind.is_sfpe() {
            continue;
        }
        let g = idx[node.id as usize];
        if g == u32::MAX || groups[g as usize].kind != FusionKind::FusedFfnAct {
            return Err(Error::Mapping(format!(
                "kernel {} ({:?}) needs a special-function unit but is placed on RRAM",
                node.id, node.role
            )));
        }
    }
    Ok(())
}

/// Compiles the mapping plan for `graph` on `platform`.
pub fn build_plan(
    graph: &OperatorGraph,
    platform: &PlatformSpec,
    policy: PlacementPolicy,
    options: MapperOptions,
) -> Result<MappingPlan> {
    options.validate()?;
    let placement = place(graph, platform, policy)?;
    let fusion_groups = fuse(graph, &placement, options.tile_size)?;
    check_sfpe_placement(graph, &placement, &fusion_groups)?;
    let weight_layout = layout_weights(graph, platform, policy, options.kv_block_tokens)?;

    let kv_budget = KvBudget {
        tiers: weight_layout
            .dram_weight_bytes
            .iter()
            .map(|w| platform.dram.tier_capacity_bytes - w)
            .collect(),
        rram: match policy {
            PlacementPolicy::Heterogeneous => {
                platform.rram.capacity_bytes() - weight_layout.rram_weight_bytes
            }
            PlacementPolicy::DramOnly => 0,
        },
    };
    let blocks = plan_blocks(
        graph.num_layers,
        graph.budget.max_context(),
        options.kv_block_tokens,
        graph.kv_bytes_per_token_per_layer,
    );
    let kv_assignment = assign_kv(&blocks, &kv_budget, options.hotness)?;
    let expected_cross_chiplet_bytes_per_step = placement.step_transfer_bytes(graph, 1);

    Ok(MappingPlan {
        graph: GraphFingerprint::of(graph),
        options,
        placement,
        fusion_groups,
        weight_layout,
        kv_assignment,
        kv_budget,
        expected_cross_chiplet_bytes_per_step,
    })
}
