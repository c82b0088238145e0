//! Versioned CSV schemas. Column order is part of the interface; bump the
//! version string whenever a column is added, removed or moved.

use chipsim::presets::BaselineRecord;
use chipsim::workload::Phase;
use chipsim::SimReport;

pub const REPORT_SCHEMA: &str = "chipsim-report/1";
pub const SWEEP_SCHEMA: &str = "chipsim-sweep/1";
pub const COMPARE_SCHEMA: &str = "chipsim-compare/1";
pub const FIG7_SCHEMA: &str = "chipsim-fig7/1";
pub const FIG9_SCHEMA: &str = "chipsim-fig9/1";
pub const FIG10_SCHEMA: &str = "chipsim-fig10/1";

pub const REPORT_COLUMNS: [&str; 32] = [
    "schema",
    "model",
    "platform",
    "policy",
    "prompt_text_tokens",
    "visual_tokens",
    "output_tokens",
    "total_latency_ns",
    "encode_ns",
    "connect_ns",
    "prefill_ns",
    "decode_ns",
    "steady_state_decode_ns_per_token",
    "throughput_token_per_s",
    "avg_power_w",
    "energy_per_inference_j",
    "token_per_j",
    "dram_dynamic_j",
    "rram_dynamic_j",
    "link_j",
    "dram_static_j",
    "rram_static_j",
    "migration_j",
    "link_bytes_total",
    "dram_bits_accessed",
    "rram_bits_read",
    "rram_bits_written",
    "kv_rebalances",
    "kv_migrations",
    "kv_offloaded_blocks",
    "kv_max_rram_write_count",
    "kv_tier_inversions_after_rebalance",
];

fn phase(r: &SimReport, p: Phase) -> String {
    r.phase_latency_ns
        .get(&p)
        .copied()
        .unwrap_or(0.0)
        .to_string()
}

/// Report fields in [`REPORT_COLUMNS`] order.
pub fn report_row(r: &SimReport) -> Vec<String> {
    let e = &r.energy;
    vec![
        REPORT_SCHEMA.to_string(),
        r.model.clone(),
        r.platform.clone(),
        r.policy.clone(),
        r.prompt_text_tokens.to_string(),
        r.visual_tokens.to_string(),
        r.output_tokens.to_string(),
        r.total_latency_ns.to_string(),
        phase(r, Phase::Encode),
        phase(r, Phase::Connect),
        phase(r, Phase::Prefill),
        phase(r, Phase::DecodeStep),
        r.steady_state_decode_ns_per_token.to_string(),
        r.throughput_token_per_s.to_string(),
        r.avg_power_w.to_string(),
        r.energy_per_inference_j.to_string(),
        r.token_per_j.to_string(),
        e.dram_dynamic_j.to_string(),
        e.rram_dynamic_j.to_string(),
        e.link_j.to_string(),
        e.dram_static_j.to_string(),
        e.rram_static_j.to_string(),
        e.migration_j.to_string(),
        r.link_bytes_total.to_string(),
        r.dram_bits_accessed.to_string(),
        r.rram_bits_read.to_string(),
        r.rram_bits_written.to_string(),
        r.kv_rebalances.to_string(),
        r.kv_migrations.to_string(),
        r.kv_offloaded_blocks.to_string(),
        r.kv_max_rram_write_count.to_string(),
        r.kv_tier_inversions_after_rebalance.to_string(),
    ]
}

/// Sweep rows: the point, its status, then the report columns (without the
/// leading schema column, which the sweep row carries instead).
pub fn sweep_columns() -> Vec<&'static str> {
    let mut c = vec!["schema", "point", "status", "error"];
    c.extend(&REPORT_COLUMNS[1..]);
    c
}

pub fn sweep_row(point: &str, result: &Result<SimReport, String>) -> Vec<String> {
    let mut row = vec![SWEEP_SCHEMA.to_string(), point.to_string()];
    match result {
        Ok(r) => {
            row.push("ok".into());
            row.push(String::new());
            row.extend(report_row(r).into_iter().skip(1));
        }
        Err(e) => {
            row.push("error".into());
            row.push(e.clone());
            row.extend(std::iter::repeat_n(String::new(), REPORT_COLUMNS.len() - 1));
        }
    }
    row
}

pub const COMPARE_COLUMNS: [&str; 11] = [
    "schema",
    "model",
    "baseline",
    "throughput_token_per_s",
    "token_per_j",
    "baseline_tps_lo",
    "baseline_tps_hi",
    "speedup_lo",
    "speedup_hi",
    "efficiency_lo",
    "efficiency_hi",
];

/// What a report is compared against: a published range or another report.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub name: String,
    pub tps: [f64; 2],
    pub token_per_j: [f64; 2],
}

impl From<&BaselineRecord> for Reference {
    fn from(b: &BaselineRecord) -> Self {
        Reference {
            name: b.name.clone(),
            tps: b.throughput_token_per_s,
            token_per_j: b.token_per_j,
        }
    }
}

impl From<&SimReport> for Reference {
    fn from(r: &SimReport) -> Self {
        Reference {
            name: format!("{} ({})", r.model, r.policy),
            tps: [r.throughput_token_per_s; 2],
            token_per_j: [r.token_per_j; 2],
        }
    }
}

/// Speedup and efficiency ratio against both ends of the reference range:
/// the `_lo` columns divide by the best reference figure.
pub fn compare_row(r: &SimReport, reference: &Reference) -> Vec<String> {
    vec![
        COMPARE_SCHEMA.to_string(),
        r.model.clone(),
        reference.name.clone(),
        r.throughput_token_per_s.to_string(),
        r.token_per_j.to_string(),
        reference.tps[0].to_string(),
        reference.tps[1].to_string(),
        (r.throughput_token_per_s / reference.tps[1]).to_string(),
        (r.throughput_token_per_s / reference.tps[0]).to_string(),
        (r.token_per_j / reference.token_per_j[1]).to_string(),
        (r.token_per_j / reference.token_per_j[0]).to_string(),
    ]
}

pub const FIG7_COLUMNS: [&str; 10] = [
    "schema",
    "model",
    "status",
    "error",
    "throughput_token_per_s",
    "avg_power_w",
    "token_per_j",
    "speedup_vs_jetson",
    "speedup_vs_facil",
    "efficiency_vs_jetson",
];

pub const FIG9_COLUMNS: [&str; 8] = [
    "schema",
    "model",
    "output_tokens",
    "status",
    "error",
    "total_latency_ms",
    "energy_j",
    "decode_fraction",
];

pub const FIG10_COLUMNS: [&str; 10] = [
    "schema",
    "model",
    "status",
    "error",
    "het_throughput_token_per_s",
    "dram_only_throughput_token_per_s",
    "speedup",
    "het_token_per_j",
    "dram_only_token_per_j",
    "efficiency_ratio",
];

/// Renders a header and rows as CSV text.
pub fn to_csv<S: AsRef<str>>(header: &[&str], rows: &[Vec<S>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        debug_assert_eq!(r.len(), header.len());
        w.write_record(r.iter().map(AsRef::as_ref))
            .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}
