mod common;

use chipsim::kernels::*;
use chipsim::mapper::{FusionKind, MapperOptions};
use chipsim::workload::{NormKind, Phase};
use chipsim::{build_graph, build_plan, presets, Error, PlacementPolicy};
use common::*;
use proptest::prelude::*;

fn row(v: &[f64]) -> Matrix {
    Matrix::from_vec(1, v.len(), v.to_vec()).unwrap()
}

fn zeros_row(n: usize) -> Matrix {
    Matrix::zeros(1, n)
}

#[test]
fn qkv_identity() {
    let i = Matrix::identity(4);
    let z = zeros_row(4);
    let (q, kt, v) = fused_qkv_proj(&i, &i, &z, &i, &z, &i, &z).unwrap();
    assert_eq!(q, i);
    assert_eq!(kt, i);
    assert_eq!(v, i);
}

#[test]
fn qkv_zero_input_gives_bias_rows() {
    let x = Matrix::zeros(3, 4);
    let w = Matrix::identity(4);
    let bq = row(&[1.0, -2.0, 3.0, 0.5]);
    let z = zeros_row(4);
    let (q, _, _) = fused_qkv_proj(&x, &w, &bq, &w, &z, &w, &z).unwrap();
    for i in 0..3 {
        assert_eq!(q.row(i), bq.row(0));
    }
}

#[test]
fn qkv_shape_mismatch() {
    let x = Matrix::zeros(2, 3);
    let w = Matrix::identity(4);
    let z = zeros_row(4);
    assert!(matches!(
        fused_qkv_proj(&x, &w, &z, &w, &z, &w, &z),
        Err(Error::Shape(_))
    ));
}

#[test]
fn single_tile_equals_dense() {
    let q = Matrix::from_fn(3, 4, |i, j| (i as f64 - j as f64) * 0.3);
    let kt = Matrix::from_fn(4, 5, |i, j| ((i * j) as f64).sin());
    let v = Matrix::from_fn(5, 2, |i, j| (i + 2 * j) as f64);
    let s = 0.5;
    let out = fused_attn_stream(&q, &kt, &v, s, 5).unwrap();
    assert!(out.max_abs_diff(&dense_attention(&q, &kt, &v, s)) < 1e-12);
}

#[test]
fn ragged_last_tile() {
    let q = Matrix::from_fn(2, 3, |i, j| (i + j) as f64 * 0.7 - 1.0);
    let kt = Matrix::from_fn(3, 7, |i, j| ((i + 3 * j) as f64).cos());
    let v = Matrix::from_fn(7, 4, |i, j| (i as f64 * 0.25 - j as f64).tanh());
    let out = fused_attn_stream(&q, &kt, &v, 1.0 / 3f64.sqrt(), 3).unwrap();
    assert!(out.max_abs_diff(&dense_attention(&q, &kt, &v, 1.0 / 3f64.sqrt())) < 1e-9);
}

#[test]
fn equal_scores_average_values() {
    let q = Matrix::zeros(2, 3);
    let kt = Matrix::from_fn(3, 6, |i, j| (i * j) as f64);
    let v = Matrix::from_fn(6, 2, |i, j| (i * 10 + j) as f64);
    let out = fused_attn_stream(&q, &kt, &v, 1.0, 4).unwrap();
    for j in 0..2 {
        let mean = (0..6).map(|i| v[(i, j)]).sum::<f64>() / 6.0;
        assert!((out[(0, j)] - mean).abs() < 1e-12);
        assert!((out[(1, j)] - mean).abs() < 1e-12);
    }
}

#[test]
fn non_finite_scores_are_reported() {
    let q = row(&[1e200, 1e200]);
    let kt = Matrix::from_fn(2, 3, |_, _| 1e200);
    let v = Matrix::identity(3);
    assert!(matches!(
        fused_attn_stream(&q, &kt, &v, 1.0, 2),
        Err(Error::NonFinite(_))
    ));
}

#[test]
fn zero_tile_rejected() {
    let m = Matrix::identity(2);
    assert!(fused_attn_stream(&m, &m, &m, 1.0, 0).is_err());
}

#[test]
fn relu_all_negative_gives_output_bias() {
    let x = Matrix::from_fn(2, 3, |_, _| 1.0);
    let w1 = Matrix::from_fn(3, 5, |_, _| -1.0);
    let b1 = zeros_row(5);
    let w2 = Matrix::from_fn(5, 3, |i, j| (i + j) as f64);
    let b2 = row(&[0.5, -1.5, 2.0]);
    let out = fused_ffn_act(&x, &w1, &b1, &w2, &b2, Act::Relu).unwrap();
    for i in 0..2 {
        assert_eq!(out.row(i), b2.row(0));
    }
}

#[test]
fn identity_activation_reduces_to_one_gemm() {
    let x = Matrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64);
    let w1 = Matrix::from_fn(3, 4, |i, j| (i as f64 - j as f64) / 2.0);
    let out = fused_ffn_act(
        &x,
        &w1,
        &zeros_row(4),
        &Matrix::identity(4),
        &zeros_row(4),
        Act::Identity,
    )
    .unwrap();
    assert_eq!(out, x.matmul(&w1).unwrap());
}

#[test]
fn constant_row_normalizes_to_shift() {
    let x = Matrix::from_fn(2, 5, |_, _| 3.5);
    let g = row(&[1.0, 2.0, 3.0, 4.0, 5.0]);
    let b = row(&[0.1, 0.2, 0.3, 0.4, 0.5]);
    let out = fused_norm(&x, &g, &b).unwrap();
    for i in 0..2 {
        assert_eq!(out.row(i), b.row(0));
    }
}

#[test]
fn norm_needs_two_columns() {
    let x = Matrix::zeros(3, 1);
    assert!(matches!(
        fused_norm(&x, &zeros_row(1), &zeros_row(1)),
        Err(Error::Shape(_))
    ));
    let empty = Matrix::zeros(3, 0);
    assert!(fused_norm(&empty, &zeros_row(0), &zeros_row(0)).is_err());
}

#[test]
fn rms_norm_skips_mean() {
    let x = row(&[1.0, 3.0]);
    let g = row(&[1.0, 1.0]);
    let out = fused_norm_with(&x, &g, &zeros_row(2), NormKind::RMSNorm, 0.0).unwrap();
    let rms = (5.0f64).sqrt();
    assert!((out[(0, 0)] - 1.0 / rms).abs() < 1e-15);
    assert!((out[(0, 1)] - 3.0 / rms).abs() < 1e-15);
}

#[test]
fn activations_at_known_points() {
    assert_eq!(Act::Relu.apply(-2.0), 0.0);
    assert!((Act::Silu.apply(0.0)).abs() < 1e-15);
    assert!((Act::Silu.apply(1.0) - 0.7310585786300049).abs() < 1e-12);
    assert!((Act::Gelu.apply(1.0) - 0.8411919906082768).abs() < 1e-12);
}

#[test]
fn fp16_rounding_changes_attention_slightly() {
    let q = Matrix::from_fn(2, 4, |i, j| 0.1 * (i + j) as f64 + 0.013);
    let kt = Matrix::from_fn(4, 6, |i, j| 0.2 * (i as f64 - j as f64) + 0.007);
    let v = Matrix::from_fn(6, 3, |i, j| (i * j) as f64 * 0.11);
    let exact = fused_attn_stream(&q, &kt, &v, 0.5, 2).unwrap();
    let rounded =
        fused_attn_stream(&q.round_fp16(), &kt.round_fp16(), &v.round_fp16(), 0.5, 2).unwrap();
    let d = exact.max_abs_diff(&rounded);
    assert!(d > 0.0 && d < 1e-2, "{d}");
}

/// The intermediates a fused kernel never writes back are the ones the
/// mapper marks as kept local for the same shapes.
#[test]
fn byte_accounting_matches_mapper() {
    let cfg = toy_model(64, 2, 1, 128, 100);
    let g = build_graph(&cfg, 4, None, 1).unwrap();
    let plan = build_plan(
        &g,
        &presets::heterogeneous(),
        PlacementPolicy::Heterogeneous,
        MapperOptions::default(),
    )
    .unwrap();
    let es = cfg.element_size as usize;
    let (h, f) = (64usize, 128usize);
    let decode = |kind| {
        plan.fusion_groups
            .iter()
            .find(|gr| gr.kind == kind && g.node(gr.first_member).phase == Phase::DecodeStep)
            .unwrap()
            .intermediate_bytes_kept_local
    };

    let x = Matrix::zeros(1, h);
    let w = Matrix::zeros(h, h);
    let b = zeros_row(h);
    let (.., qkv) = fused_qkv_proj_traced(&x, &w, &b, &w, &b, &w, &b).unwrap();
    assert_eq!(
        intermediate_bytes(&qkv, es),
        decode(FusionKind::FusedQkvProj)
    );

    let (_, ffn) = fused_ffn_act_traced(
        &x,
        &Matrix::zeros(h, f),
        &zeros_row(f),
        &Matrix::zeros(f, h),
        &b,
        Act::Silu,
    )
    .unwrap();
    assert_eq!(
        intermediate_bytes(&ffn, es),
        decode(FusionKind::FusedFfnAct)
    );
}

fn attn_case() -> impl Strategy<Value = (Matrix, Matrix, Matrix, usize, f64)> {
    (1usize..5, 1usize..9, 1usize..20, 1usize..6).prop_flat_map(|(m, d, ctx, dv)| {
        (
            arb_matrix(m, d),
            arb_matrix(d, ctx),
            arb_matrix(ctx, dv),
            1usize..=ctx,
            Just(1.0 / (d as f64).sqrt()),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn streaming_matches_dense((q, kt, v, tile, s) in attn_case()) {
        let out = fused_attn_stream(&q, &kt, &v, s, tile).unwrap();
        prop_assert!(out.max_abs_diff(&dense_attention(&q, &kt, &v, s)) < 1e-9);
    }

    #[test]
    fn tile_order_does_not_matter((q, kt, v, tile, s) in attn_case(), seed in any::<u64>()) {
        let n = kt.cols().div_ceil(tile);
        let mut order: Vec<usize> = (0..n).collect();
        // deterministic shuffle from the seed
        let mut state = seed | 1;
        for i in (1..n).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            order.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let a = fused_attn_stream(&q, &kt, &v, s, tile).unwrap();
        let b = fused_attn_stream_ordered(&q, &kt, &v, s, tile, &order).unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-9);
    }

    #[test]
    fn implied_weights_sum_to_one((q, kt, _v, tile, s) in attn_case()) {
        let ones = Matrix::from_fn(kt.cols(), 1, |_, _| 1.0);
        let out = fused_attn_stream(&q, &kt, &ones, s, tile).unwrap();
        for i in 0..out.rows() {
            prop_assert!((out[(i, 0)] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn qkv_matches_unfused(
        (x, wq, wk, wv, bq, bk, bv) in (1usize..5, 1usize..9, 1usize..9).prop_flat_map(|(m, k, n)| (
            arb_matrix(m, k), arb_matrix(k, n), arb_matrix(k, n), arb_matrix(k, n),
            arb_matrix(1, n), arb_matrix(1, n), arb_matrix(1, n)))
    ) {
        let (q, kt, v) = fused_qkv_proj(&x, &wq, &bq, &wk, &bk, &wv, &bv).unwrap();
        let xr = to_rows(&x);
        let proj = |w: &Matrix, b: &Matrix| {
            let mut r = naive_matmul(&xr, &to_rows(w));
            naive_add_bias(&mut r, b.row(0));
            from_rows(&r)
        };
        prop_assert!(q.max_abs_diff(&proj(&wq, &bq)) < 1e-12);
        prop_assert!(kt.transpose().max_abs_diff(&proj(&wk, &bk)) < 1e-12);
        prop_assert!(v.max_abs_diff(&proj(&wv, &bv)) < 1e-12);
    }

    #[test]
    fn ffn_matches_unfused(
        (x, w1, b1, w2, b2) in (1usize..4, 2usize..9, 2usize..33).prop_flat_map(|(m, h, f)| (
            arb_matrix(m, h), arb_matrix(h, f), arb_matrix(1, f), arb_matrix(f, h), arb_matrix(1, h))),
        act in prop::sample::select(vec![Act::Gelu, Act::Silu, Act::Relu, Act::Identity])
    ) {
        let out = fused_ffn_act(&x, &w1, &b1, &w2, &b2, act).unwrap();
        let mut hid = naive_matmul(&to_rows(&x), &to_rows(&w1));
        naive_add_bias(&mut hid, b1.row(0));
        let hid: Vec<Vec<f64>> = hid.iter().map(|r| r.iter().map(|&v| act.apply(v)).collect()).collect();
        let mut o = naive_matmul(&hid, &to_rows(&w2));
        naive_add_bias(&mut o, b2.row(0));
        prop_assert!(out.max_abs_diff(&from_rows(&o)) < 1e-12);
    }

    #[test]
    fn norm_matches_formula(
        (x, g, b) in (1usize..5, 2usize..20).prop_flat_map(|(m, n)| (arb_matrix(m, n), arb_matrix(1, n), arb_matrix(1, n)))
    ) {
        let out = fused_norm(&x, &g, &b).unwrap();
        for i in 0..x.rows() {
            let r = x.row(i);
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            for j in 0..r.len() {
                let want = (r[j] - mean) / (var + 1e-5).sqrt() * g[(0, j)] + b[(0, j)];
                prop_assert!((out[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unit_norm_has_zero_mean_unit_variance(x in (1usize..4, 2usize..20).prop_flat_map(|(m, n)| arb_matrix(m, n))) {
        let n = x.cols();
        prop_assume!((0..x.rows()).all(|i| {
            let r = x.row(i);
            let mean = r.iter().sum::<f64>() / n as f64;
            r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64 > 1e-2
        }));
        let g = Matrix::from_fn(1, n, |_, _| 1.0);
        let out = fused_norm_with(&x, &g, &zeros_row(n), NormKind::LayerNorm, 0.0).unwrap();
        for i in 0..out.rows() {
            let r = out.row(i);
            let mean = r.iter().sum::<f64>() / n as f64;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-12);
            prop_assert!((var - 1.0).abs() < 1e-9);
        }
    }
}
