//! Double-precision reference implementations of the fused kernels.
//!
//! These are oracles for the performance model, not fast kernels.

mod fused;
mod matrix;

pub use fused::{
    fused_attn_stream, fused_attn_stream_ordered, fused_ffn_act, fused_ffn_act_traced, fused_norm,
    fused_norm_with, fused_qkv_proj, fused_qkv_proj_traced, intermediate_bytes, Act, Intermediates,
    SoftmaxState, NORM_EPS,
};
pub use matrix::Matrix;
