use chipsim_web::{attention_demo_json, seqlen_sweep_json, simulate_json};
use serde_json::Value;

#[test]
fn simulate_returns_a_summary() {
    let v: Value =
        serde_json::from_str(&simulate_json("fastvlm_0_6b", "het", 32, 8, 256).unwrap()).unwrap();
    assert_eq!(v["policy"], "het");
    let fractions: f64 = v["phase_fractions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f.as_f64().unwrap())
        .sum();
    assert!((fractions - 1.0).abs() < 1e-9);
    assert!(v["token_per_j"].as_f64().unwrap() > 0.0);
}

#[test]
fn text_only_has_no_visual_tokens() {
    let v: Value =
        serde_json::from_str(&simulate_json("mobilevlm_1_7b", "dram-only", 16, 4, 0).unwrap())
            .unwrap();
    assert_eq!(v["visual_tokens"], 0);
}

#[test]
fn bad_inputs_are_errors_not_panics() {
    assert!(simulate_json("nope", "het", 1, 1, 0).is_err());
    assert!(simulate_json("fastvlm_0_6b", "maybe", 1, 1, 0).is_err());
    assert!(seqlen_sweep_json("fastvlm_0_6b", "", 8, 0).is_err());
    assert!(seqlen_sweep_json("fastvlm_0_6b", "8,x", 8, 0).is_err());
    assert!(attention_demo_json(0, 8, 4).is_err());
}

#[test]
fn sweep_covers_both_policies() {
    let v: Value =
        serde_json::from_str(&seqlen_sweep_json("fastvlm_0_6b", "4,16", 16, 0).unwrap()).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0]["policy"], "het");
    assert_eq!(rows[3]["policy"], "dram-only");
    assert!(rows[1]["total_latency_ms"].as_f64() > rows[0]["total_latency_ms"].as_f64());
}

#[test]
fn streaming_attention_matches_dense() {
    for (ctx, tile) in [(1, 1), (100, 7), (513, 64), (64, 512)] {
        let v: Value = serde_json::from_str(&attention_demo_json(ctx, 16, tile).unwrap()).unwrap();
        assert!(v["max_abs_diff"].as_f64().unwrap() < 1e-12, "{v}");
        assert_eq!(v["tiles"].as_u64().unwrap() as usize, ctx.div_ceil(tile));
    }
}
