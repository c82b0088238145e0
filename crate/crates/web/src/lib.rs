//! Browser bindings. Each export takes plain numbers and strings and returns
//! a JSON string, so the page needs no generated TypeScript types.

use chipsim::engine::{phase_fractions, sweep, Execution, SweepAxis, SweepPoint};
use chipsim::kernels::{fused_attn_stream, Matrix};
use chipsim::workload::{ImageDims, Phase};
use chipsim::{presets, Experiment, PlacementPolicy, SimReport, Workload};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct Summary {
    pub model: String,
    pub policy: String,
    pub visual_tokens: u32,
    pub total_latency_ms: f64,
    pub throughput_token_per_s: f64,
    pub avg_power_w: f64,
    pub token_per_j: f64,
    /// Fraction of end-to-end latency in encode, connect, prefill, decode.
    pub phase_fractions: [f64; 4],
    /// Energy in dram dynamic, rram dynamic, link, static, migration.
    pub energy_j: [f64; 5],
    pub kv_offloaded_blocks: u64,
}

impl Summary {
    fn from_report(r: &SimReport) -> Result<Self, String> {
        let f = phase_fractions(r).map_err(|e| e.to_string())?;
        let e = &r.energy;
        Ok(Summary {
            model: r.model.clone(),
            policy: r.policy.clone(),
            visual_tokens: r.visual_tokens,
            total_latency_ms: r.total_latency_ns / 1e6,
            throughput_token_per_s: r.throughput_token_per_s,
            avg_power_w: r.avg_power_w,
            token_per_j: r.token_per_j,
            phase_fractions: Phase::ALL.map(|p| f.get(&p).copied().unwrap_or(0.0)),
            energy_j: [
                e.dram_dynamic_j,
                e.rram_dynamic_j,
                e.link_j,
                e.dram_static_j + e.rram_static_j,
                e.migration_j,
            ],
            kv_offloaded_blocks: r.kv_offloaded_blocks,
        })
    }
}

fn experiment(
    model: &str,
    policy: &str,
    prompt: u32,
    output: u32,
    image_px: u32,
) -> Result<Experiment, String> {
    let m = presets::model(model).map_err(|e| e.to_string())?;
    let policy = PlacementPolicy::parse(policy).map_err(|e| e.to_string())?;
    let platform = match policy {
        PlacementPolicy::Heterogeneous => presets::heterogeneous(),
        PlacementPolicy::DramOnly => presets::dram_only(),
    };
    let image = (image_px > 0).then_some(ImageDims {
        width: image_px,
        height: image_px,
    });
    Ok(Experiment::new(m, platform)
        .with_policy(policy)
        .with_workload(Workload {
            prompt_tokens: prompt,
            image,
            output_tokens: output,
        }))
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

/// One inference on a preset model. `image_px` is the side of a square
/// image, 0 for text only.
pub fn simulate_json(
    model: &str,
    policy: &str,
    prompt: u32,
    output: u32,
    image_px: u32,
) -> Result<String, String> {
    let r = experiment(model, policy, prompt, output, image_px)?
        .run()
        .map_err(|e| e.to_string())?;
    Ok(json(&Summary::from_report(&r)?))
}

#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub output_tokens: u32,
    pub policy: String,
    pub total_latency_ms: Option<f64>,
    pub token_per_j: Option<f64>,
    pub error: Option<String>,
}

/// Output-length sweep under both placements.
pub fn seqlen_sweep_json(
    model: &str,
    values: &str,
    prompt: u32,
    image_px: u32,
) -> Result<String, String> {
    let points = SweepAxis::SeqLen
        .points(values)
        .map_err(|e| e.to_string())?;
    if points.is_empty() {
        return Err("no sequence lengths given".into());
    }
    let mut rows = Vec::new();
    for policy in ["het", "dram-only"] {
        let base = experiment(model, policy, prompt, 1, image_px)?;
        for o in sweep(&base, &points, Execution::Sequential).map_err(|e| e.to_string())? {
            let SweepPoint::SeqLen(n) = o.point else {
                unreachable!()
            };
            rows.push(SweepRow {
                output_tokens: n,
                policy: policy.to_string(),
                total_latency_ms: o.result.as_ref().ok().map(|r| r.total_latency_ns / 1e6),
                token_per_j: o.result.as_ref().ok().map(|r| r.token_per_j),
                error: o.result.err(),
            });
        }
    }
    Ok(json(&rows))
}

#[derive(Debug, Serialize)]
pub struct AttentionDemo {
    pub context: usize,
    pub tile: usize,
    pub tiles: usize,
    pub max_abs_diff: f64,
    /// Bytes a materialized score matrix would occupy (fp16).
    pub dense_score_bytes: u64,
    /// Bytes of running max, running sum and accumulator (fp16).
    pub streaming_state_bytes: u64,
}

fn dense_attention(q: &Matrix, kt: &Matrix, v: &Matrix, scale: f64) -> Result<Matrix, String> {
    let s = q.matmul(kt).map_err(|e| e.to_string())?;
    let mut p = s.map(|x| x * scale);
    for i in 0..p.rows() {
        let row = p.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.iter_mut().for_each(|x| *x = (*x - max).exp());
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= sum);
    }
    p.matmul(v).map_err(|e| e.to_string())
}

/// Runs tiled streaming attention for one decode query against a
/// `context`-token cache and checks it against the materialized softmax.
pub fn attention_demo_json(context: usize, head_dim: usize, tile: usize) -> Result<String, String> {
    if context == 0 || head_dim == 0 || tile == 0 {
        return Err("context, head_dim and tile must be positive".into());
    }
    // smooth deterministic inputs, spread enough to make the softmax peaky
    let q = Matrix::from_fn(1, head_dim, |_, j| (j as f64 * 0.37).sin() * 2.0);
    let kt = Matrix::from_fn(head_dim, context, |i, j| {
        ((i * 7 + j * 3) as f64 * 0.11).cos() * 1.5
    });
    let v = Matrix::from_fn(context, head_dim, |i, j| ((i + 2 * j) as f64 * 0.05).sin());
    let scale = 1.0 / (head_dim as f64).sqrt();
    let streamed = fused_attn_stream(&q, &kt, &v, scale, tile).map_err(|e| e.to_string())?;
    let dense = dense_attention(&q, &kt, &v, scale)?;
    Ok(json(&AttentionDemo {
        context,
        tile,
        tiles: context.div_ceil(tile),
        max_abs_diff: streamed.max_abs_diff(&dense),
        dense_score_bytes: 2 * context as u64,
        streaming_state_bytes: 2 * (2 + head_dim as u64),
    }))
}

#[wasm_bindgen]
pub fn simulate(
    model: &str,
    policy: &str,
    prompt: u32,
    output: u32,
    image_px: u32,
) -> Result<String, JsValue> {
    simulate_json(model, policy, prompt, output, image_px).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn seqlen_sweep(
    model: &str,
    values: &str,
    prompt: u32,
    image_px: u32,
) -> Result<String, JsValue> {
    seqlen_sweep_json(model, values, prompt, image_px).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn attention_demo(context: usize, head_dim: usize, tile: usize) -> Result<String, JsValue> {
    attention_demo_json(context, head_dim, tile).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn model_names() -> String {
    json(&presets::MODEL_KEYS)
}
