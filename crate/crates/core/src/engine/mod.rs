//! Event-driven timing and energy simulation of a mapped operator graph.

mod cost;
mod report;
mod sched;
mod sweep;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use cost::{time_kernel, time_link_transfer, KernelCost, MAX_TIERS};
pub use report::{backbone_fraction, phase_fractions, EnergyBreakdown, SimReport};
pub use sweep::{sweep, Execution, SweepAxis, SweepOutcome, SweepPoint};

use crate::error::{Error, Result};
use crate::hardware::{ActivityModel, PlatformSpec};
use crate::mapper::{
    build_plan, group_index, tier_inversions, Chiplet, KvCacheState, MapperOptions, MappingPlan,
    PlacementPolicy,
};
use crate::workload::{build_graph, ImageDims, ModelConfig, OperatorGraph, Phase};
use cost::{accumulate, link_cost, price, Residency, Work};
use sched::{schedule, UnitGraph};

const DRAM: u8 = 0;
const RRAM: u8 = 1;
const LINK: u8 = 2;

/// Inputs of one inference request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workload {
    pub prompt_tokens: u32,
    pub image: Option<ImageDims>,
    pub output_tokens: u32,
}

impl Default for Workload {
    fn default() -> Self {
        Workload {
            prompt_tokens: 128,
            image: Some(ImageDims {
                width: 512,
                height: 512,
            }),
            output_tokens: 488,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    pub trace: bool,
}

/// One line of the optional event trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time_ps: u64,
    pub chiplet: String,
    pub event: String,
    pub id: u32,
    pub kind: String,
    pub phase: Phase,
    pub step: u32,
    pub layer: u32,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub report: SimReport,
    pub trace: Vec<TraceRecord>,
}

/// A model on a platform under a policy and workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub model: ModelConfig,
    pub platform: PlatformSpec,
    pub policy: PlacementPolicy,
    pub workload: Workload,
    pub mapper: MapperOptions,
}

impl Experiment {
    pub fn new(model: ModelConfig, platform: PlatformSpec) -> Self {
        let policy = platform.default_policy;
        Experiment {
            model,
            platform,
            policy,
            workload: Workload::default(),
            mapper: MapperOptions::default(),
        }
    }

    pub fn with_policy(mut self, policy: PlacementPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_workload(mut self, workload: Workload) -> Self {
        self.workload = workload;
        self
    }

    pub fn graph(&self) -> Result<OperatorGraph> {
        let w = &self.workload;
        build_graph(&self.model, w.prompt_tokens, w.image, w.output_tokens)
    }

    pub fn plan(&self, graph: &OperatorGraph) -> Result<MappingPlan> {
        build_plan(graph, &self.platform, self.policy, self.mapper)
    }

    pub fn simulate(&self, options: SimOptions) -> Result<SimOutput> {
        let graph = self.graph()?;
        let plan = self.plan(&graph)?;
        simulate(&graph, &plan, &self.platform, options)
    }

    pub fn run(&self) -> Result<SimReport> {
        Ok(self.simulate(SimOptions::default())?.report)
    }
}

/// Simulates `graph` under `plan` and returns the report.
pub fn run(
    graph: &OperatorGraph,
    plan: &MappingPlan,
    platform: &PlatformSpec,
) -> Result<SimReport> {
    Ok(simulate(graph, plan, platform, SimOptions::default())?.report)
}

#[derive(Debug, Clone, Copy)]
enum UnitKind {
    Group(u32),
    Single,
    Transfer(u32),
}

#[derive(Debug, Clone, Copy)]
struct UnitInfo {
    kind: UnitKind,
    first: u32,
    len: u32,
    phase: Phase,
    step: u32,
    layer: u32,
}

#[derive(Default)]
struct Totals {
    kind_latency: BTreeMap<&'static str, f64>,
    kind_energy: BTreeMap<&'static str, f64>,
    dram_j: f64,
    rram_j: f64,
    link_j: f64,
    static_j: [f64; 2],
    busy_ns: [f64; 3],
    migration_j: f64,
    link_bytes: u64,
    link_by_phase: BTreeMap<Phase, u64>,
    dram_bits: u64,
    rram_read_bits: u64,
    rebalances: u32,
    migrations: u64,
    migration_bytes: u64,
    inversions: u64,
    max_flops: [f64; 2],
}

fn resource_name(r: u8) -> &'static str {
    match r {
        DRAM => "dram",
        RRAM => "rram",
        _ => "link",
    }
}

pub fn simulate(
    graph: &OperatorGraph,
    plan: &MappingPlan,
    platform: &PlatformSpec,
    options: SimOptions,
) -> Result<SimOutput> {
    plan.check_against(graph)?;
    if platform.dram.tiers as usize > MAX_TIERS {
        return Err(Error::field(
            "dram.tiers",
            format!("at most {MAX_TIERS} tiers supported"),
        ));
    }
    let n = graph.len();
    let groups = &plan.fusion_groups;
    let placement = &plan.placement;
    let gidx = group_index(n, groups);

    // Units: fused groups and standalone kernels in kernel order, then transfers.
    let mut units: Vec<UnitInfo> = Vec::new();
    let mut unit_of = vec![0u32; n];
    for node in &graph.nodes {
        let g = gidx[node.id as usize];
        if g != u32::MAX && groups[g as usize].first_member != node.id {
            unit_of[node.id as usize] = units.len() as u32 - 1;
            continue;
        }
        let (kind, len) = if g != u32::MAX {
            (UnitKind::Group(g), groups[g as usize].member_count)
        } else {
            (UnitKind::Single, 1)
        };
        unit_of[node.id as usize] = units.len() as u32;
        units.push(UnitInfo {
            kind,
            first: node.id,
            len,
            phase: node.phase,
            step: node.step,
            layer: node.layer_index,
        });
    }
    let mut via_transfer: HashMap<(u32, u32), u32> = HashMap::new();
    for (i, e) in placement.transfers.iter().enumerate() {
        let c = graph.node(e.consumer);
        via_transfer.insert((e.producer, e.consumer), units.len() as u32);
        units.push(UnitInfo {
            kind: UnitKind::Transfer(i as u32),
            first: e.consumer,
            len: 0,
            phase: c.phase,
            step: c.step,
            layer: c.layer_index,
        });
    }

    let mut ug = UnitGraph::with_capacity(units.len());
    let mut deps: Vec<u32> = Vec::new();
    for (u, info) in units.iter().enumerate() {
        deps.clear();
        match info.kind {
            UnitKind::Transfer(e) => {
                deps.push(unit_of[placement.transfers[e as usize].producer as usize])
            }
            _ => {
                for m in info.first..info.first + info.len {
                    for &d in &graph.node(m).deps {
                        let du = match via_transfer.get(&(d, m)) {
                            Some(&t) => t,
                            None => unit_of[d as usize],
                        };
                        if du != u as u32 && !deps.contains(&du) {
                            deps.push(du);
                        }
                    }
                }
            }
        }
        let resource = match info.kind {
            UnitKind::Transfer(_) => LINK,
            _ => match placement.chiplet(info.first) {
                Chiplet::DramNmp => DRAM,
                Chiplet::RramNmp => RRAM,
            },
        };
        ug.push(resource, &deps);
    }

    let mut consumed = vec![false; n];
    let mut escapes = vec![false; n];
    for node in &graph.nodes {
        for &d in &node.deps {
            consumed[d as usize] = true;
            if unit_of[d as usize] != unit_of[node.id as usize] {
                escapes[d as usize] = true;
            }
        }
    }
    for i in 0..n {
        escapes[i] |= !consumed[i];
    }

    let mut kv = KvCacheState::new(
        graph.num_layers,
        plan.options.kv_block_tokens,
        graph.kv_bytes_per_token_per_layer,
        plan.kv_budget.clone(),
        plan.options.hotness,
    );
    let het = plan.policy() == PlacementPolicy::Heterogeneous;
    let idle = platform.idle_factors();
    let peak_power = [platform.dram.peak_power_w, platform.rram.peak_power_w];
    let period = plan.options.rebalance_period;
    let mut tot = Totals::default();

    let timeline = schedule(&ug, 3, |u, _now| {
        let info = units[u as usize];
        let (cost, traffic, mig_ns, label) = match info.kind {
            UnitKind::Transfer(e) => {
                let (c, t) = link_cost(placement.transfers[e as usize].bytes, &platform.link);
                (c, t, 0.0, "transfer")
            }
            _ => {
                let chiplet = placement.chiplet(info.first);
                let mut mig_ns = 0.0;
                let step_head = info.phase == Phase::DecodeStep
                    && info.step > 1
                    && (info.step - 1).is_multiple_of(period)
                    && graph.step_starts[info.step as usize - 1] == info.first;
                if step_head {
                    let m = kv.rebalance(platform)?;
                    tot.rebalances += 1;
                    tot.inversions += tier_inversions(&kv.blocks) as u64;
                    tot.migrations += m.blocks_moved as u64;
                    tot.migration_bytes += m.bytes_moved;
                    tot.migration_j += m.joules;
                    mig_ns += m.ns;
                }
                let on_reducer = matches!(info.kind, UnitKind::Group(g)
                    if groups[g as usize].kind == crate::mapper::FusionKind::FusedFfnAct);
                let is_local = |s: u32| unit_of[s as usize] == u;
                let mut work = Work::default();
                for m in info.first..info.first + info.len {
                    let res = Residency {
                        layout: &plan.weight_layout,
                        is_local: &is_local,
                        escapes: escapes[m as usize],
                    };
                    if let Some(ev) = accumulate(
                        graph.node(m),
                        chiplet,
                        on_reducer,
                        platform,
                        &res,
                        &mut kv,
                        &mut work,
                    )? {
                        tot.migrations += ev.blocks_moved as u64;
                        tot.migration_bytes += ev.bytes_moved;
                        tot.migration_j += ev.joules;
                        mig_ns += ev.ns;
                    }
                }
                let (c, t) = price(&work, chiplet, platform);
                let r = if chiplet == Chiplet::DramNmp { 0 } else { 1 };
                if c.chosen_ns > 0.0 {
                    tot.max_flops[r] =
                        tot.max_flops[r].max(work.flops as f64 / (c.chosen_ns * 1e-9));
                }
                let label = match info.kind {
                    UnitKind::Group(g) => groups[g as usize].kind.name(),
                    _ => graph.node(info.first).kind.name(),
                };
                (c, t, mig_ns, label)
            }
        };
        let dur_ns = cost.chosen_ns + mig_ns;
        let dur_ps = (dur_ns * 1000.0).round() as u64;
        let dur_ns = dur_ps as f64 / 1000.0;
        let r = ug.resource[u as usize];
        tot.busy_ns[r as usize] += dur_ns;
        if r != LINK && dur_ns > 0.0 {
            let c = r as usize;
            let activity = match platform.activity {
                ActivityModel::Utilization => (cost.compute_ns / dur_ns).min(1.0),
                ActivityModel::Fixed(a) => a,
            };
            tot.static_j[c] += peak_power[c] * activity.max(idle[c]) * dur_ns * 1e-9;
        }
        *tot.kind_latency.entry(label).or_default() += dur_ns;
        *tot.kind_energy.entry(label).or_default() += cost.dynamic_energy_j;
        tot.dram_j += traffic.dram_j;
        tot.rram_j += traffic.rram_j;
        tot.link_j += traffic.link_j;
        tot.link_bytes += traffic.link_bytes;
        *tot.link_by_phase.entry(info.phase).or_default() += traffic.link_bytes;
        tot.dram_bits += traffic.dram_bits;
        tot.rram_read_bits += traffic.rram_read_bits;
        Ok(dur_ps)
    })
    .map_err(|e| match e {
        Error::Deadlock {
            waiting,
            blocked_on,
        } => Error::Deadlock {
            waiting: units[waiting as usize].first,
            blocked_on: units
                .get(blocked_on as usize)
                .map_or(blocked_on, |i| i.first),
        },
        other => other,
    })?;

    let ps_to_ns = |ps: u64| ps as f64 / 1000.0;
    let total_ps = timeline.end.iter().copied().max().unwrap_or(0);
    let total_ns = ps_to_ns(total_ps);

    let mut phase_end: BTreeMap<Phase, u64> = BTreeMap::new();
    let t_steps = graph.budget.output_tokens as usize;
    let mut step_end = vec![0u64; t_steps + 1];
    for (u, info) in units.iter().enumerate() {
        let e = timeline.end[u];
        let pe = phase_end.entry(info.phase).or_insert(0);
        *pe = (*pe).max(e);
        if info.phase == Phase::DecodeStep {
            let s = &mut step_end[info.step as usize];
            *s = (*s).max(e);
        }
    }
    let mut phase_latency_ns = BTreeMap::new();
    let mut prev = 0u64;
    for p in Phase::ALL {
        if let Some(&e) = phase_end.get(&p) {
            phase_latency_ns.insert(p, ps_to_ns(e.saturating_sub(prev)));
            prev = prev.max(e);
        }
    }
    step_end[0] = phase_end
        .iter()
        .filter(|(p, _)| **p != Phase::DecodeStep)
        .map(|(_, e)| *e)
        .max()
        .unwrap_or(0);
    let decode_step_ns: Vec<f64> = (1..=t_steps)
        .map(|t| ps_to_ns(step_end[t] - step_end[t - 1]))
        .collect();
    let decode_ns = ps_to_ns(step_end[t_steps] - step_end[0]);
    let steady = decode_ns / t_steps as f64;

    // Idle power of chiplets present in the design.
    for c in 0..2 {
        if c == 1 && !het {
            continue;
        }
        let idle_ns = (total_ns - tot.busy_ns[c]).max(0.0);
        tot.static_j[c] += peak_power[c] * idle[c] * idle_ns * 1e-9;
    }

    let energy = EnergyBreakdown {
        dram_dynamic_j: tot.dram_j,
        rram_dynamic_j: tot.rram_j,
        link_j: tot.link_j,
        dram_static_j: tot.static_j[0],
        rram_static_j: tot.static_j[1],
        migration_j: tot.migration_j,
    };
    let energy_j = energy.total();
    let avg_power_w = energy_j / (total_ns * 1e-9);
    let throughput = 1e9 / steady;

    let mut notes = platform.cross_check_notes();
    if het {
        notes.push("feed-forward bias adds and activation run on the RRAM PU reducers".into());
    }
    if kv.offloaded_blocks() > 0 {
        notes.push(format!(
            "{} KV blocks offloaded to RRAM and read back over the link",
            kv.offloaded_blocks()
        ));
    }

    let rram_bits_written = kv
        .blocks
        .iter()
        .map(|b| b.bytes * 8 * b.write_count as u64)
        .sum();
    let report = SimReport {
        model: graph.model.clone(),
        platform: platform.name.clone(),
        policy: plan.policy().name().to_string(),
        prompt_text_tokens: graph.budget.prompt_text_tokens,
        visual_tokens: graph.budget.visual_tokens,
        output_tokens: graph.budget.output_tokens,
        kernels: n as u64,
        units: units.len() as u64,
        total_latency_ns: total_ns,
        phase_latency_ns,
        kind_latency_ns: tot
            .kind_latency
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect(),
        kind_energy_j: tot
            .kind_energy
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect(),
        decode_step_ns,
        steady_state_decode_ns_per_token: steady,
        throughput_token_per_s: throughput,
        avg_power_w,
        energy_per_inference_j: avg_power_w * (total_ns * 1e-9),
        token_per_j: throughput / avg_power_w,
        energy,
        link_bytes_total: tot.link_bytes,
        link_bytes_by_phase: tot.link_by_phase,
        dram_bits_accessed: tot.dram_bits,
        rram_bits_read: tot.rram_read_bits,
        rram_bits_written,
        rram_preload_bytes: plan.weight_layout.rram_weight_bytes,
        kv_rebalances: tot.rebalances,
        kv_migrations: tot.migrations,
        kv_migration_bytes: tot.migration_bytes,
        kv_offloaded_blocks: kv.offloaded_blocks() as u64,
        kv_max_rram_write_count: kv.max_rram_write_count(),
        kv_tier_inversions_after_rebalance: tot.inversions,
        dram_busy_ns: tot.busy_ns[0],
        rram_busy_ns: tot.busy_ns[1],
        link_busy_ns: tot.busy_ns[2],
        max_achieved_flops_dram: tot.max_flops[0],
        max_achieved_flops_rram: tot.max_flops[1],
        dram_peak_check: platform.dram.peak_flops_check(),
        rram_peak_check: platform.rram.peak_flops_check(),
        notes,
    };

    let trace = if options.trace {
        let mut recs = Vec::with_capacity(units.len() * 2);
        for (u, info) in units.iter().enumerate() {
            let kind = match info.kind {
                UnitKind::Group(g) => groups[g as usize].kind.name(),
                UnitKind::Single => graph.node(info.first).kind.name(),
                UnitKind::Transfer(e) => match placement.transfers[e as usize].point {
                    crate::mapper::TransferPoint::AttnOut => "transfer_attn_out",
                    crate::mapper::TransferPoint::FfnOut => "transfer_ffn_out",
                    crate::mapper::TransferPoint::Other => "transfer",
                },
            };
            for (event, t) in [("start", timeline.start[u]), ("end", timeline.end[u])] {
                recs.push(TraceRecord {
                    time_ps: t,
                    chiplet: resource_name(ug.resource[u]).to_string(),
                    event: event.to_string(),
                    id: u as u32,
                    kind: kind.to_string(),
                    phase: info.phase,
                    step: info.step,
                    layer: info.layer,
                });
            }
        }
        recs.sort_by_key(|a| (a.time_ps, a.event != "end", a.id));
        recs
    } else {
        Vec::new()
    };
    Ok(SimOutput { report, trace })
}

/// Writes the trace as line-delimited JSON.
pub fn trace_to_jsonl(trace: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in trace {
        out.push_str(&serde_json::to_string(r).expect("trace record serializes"));
        out.push('\n');
    }
    out
}
