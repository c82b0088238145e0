#![allow(dead_code)]

use chipsim::kernels::Matrix;
use chipsim::ModelConfig;
use proptest::prelude::*;
use serde_json::json;

/// A deliberately small model: one or more backbone layers behind a
/// single-stage ViT encoder.
pub fn toy_model(hidden: u32, heads: u32, layers: u32, ffn: u32, vocab: u32) -> ModelConfig {
    let v = json!({
        "name": "toy",
        "hidden_dim": hidden,
        "num_layers": layers,
        "num_heads": heads,
        "head_dim": hidden / heads,
        "ffn_dim": ffn,
        "vocab_size": vocab,
        "encoder_kind": "ViT",
        "encoder_tokens_out": 16,
        "encoder_input_px": [64, 64],
        "encoder_stages": [{"tokens": 16, "width": 32, "depth": 1, "mlp_ratio": 2, "mixer": "Attention"}],
        "connector_kind": "MLP",
        "connector_dims": [32, hidden]
    });
    ModelConfig::from_json(&v.to_string()).unwrap()
}

/// Random but valid model configurations, kept small so a full simulation
/// takes milliseconds.
pub fn arb_model() -> impl Strategy<Value = ModelConfig> {
    (
        1u32..=4,
        prop::sample::select(vec![8u32, 16, 32]),
        1u32..=3,
        2u32..=4,
        50u32..400,
        prop::sample::select(vec![4u32, 9, 16]),
        prop::sample::select(vec![16u32, 32]),
        any::<bool>(),
        any::<bool>(),
    )
        .prop_map(|(heads, hd, layers, mult, vocab, tokens, width, deep_conn, conv)| {
            let h = heads * hd;
            let dims = if deep_conn { vec![width, h, h] } else { vec![width, h] };
            let (kind, stages) = if conv {
                (
                    "FastViTHD",
                    json!([
                        {"tokens": tokens * 4, "width": width / 2, "depth": 1, "mlp_ratio": 2, "mixer": "Conv", "kernel_size": 3},
                        {"tokens": tokens, "width": width, "depth": 1, "mlp_ratio": 2, "mixer": "Attention"}
                    ]),
                )
            } else {
                ("ViT", json!([{"tokens": tokens, "width": width, "depth": 2, "mlp_ratio": 2, "mixer": "Attention"}]))
            };
            let v = json!({
                "name": format!("rand-{heads}x{hd}-l{layers}"),
                "hidden_dim": h,
                "num_layers": layers,
                "num_heads": heads,
                "head_dim": hd,
                "ffn_dim": h * mult,
                "vocab_size": vocab,
                "encoder_kind": kind,
                "encoder_tokens_out": tokens,
                "encoder_input_px": [64, 64],
                "encoder_stages": stages,
                "connector_kind": "MLP",
                "connector_dims": dims,
            });
            ModelConfig::from_json(&v.to_string()).unwrap()
        })
}

pub fn arb_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-2.0f64..2.0, rows * cols)
        .prop_map(move |d| Matrix::from_vec(rows, cols, d).unwrap())
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn from_rows(r: &[Vec<f64>]) -> Matrix {
    let cols = r.first().map_or(0, Vec::len);
    Matrix::from_vec(r.len(), cols, r.concat()).unwrap()
}

pub fn naive_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = b[0].len();
    a.iter()
        .map(|row| {
            (0..n)
                .map(|j| row.iter().enumerate().map(|(k, x)| x * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn naive_add_bias(a: &mut [Vec<f64>], b: &[f64]) {
    for row in a {
        for (x, y) in row.iter_mut().zip(b) {
            *x += y;
        }
    }
}

/// Materializes the full score matrix and applies a textbook softmax.
pub fn dense_attention(q: &Matrix, kt: &Matrix, v: &Matrix, scale: f64) -> Matrix {
    let s = naive_matmul(&to_rows(q), &to_rows(kt));
    let p: Vec<Vec<f64>> = s
        .iter()
        .map(|row| {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|x| ((x - m) * scale).exp()).collect();
            let z: f64 = e.iter().sum();
            e.iter().map(|x| x / z).collect()
        })
        .collect();
    from_rows(&naive_matmul(&p, &to_rows(v)))
}
