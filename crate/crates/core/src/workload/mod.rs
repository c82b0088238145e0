//! Model configuration and the kernel-level operator graph.

mod build;
mod config;
mod graph;

pub use build::build_graph;
pub use config::{
    Activation, ConnectorKind, EncoderKind, EncoderStage, MixerKind, ModelConfig, NormKind,
};
pub use graph::{
    flops_of_gemm, GemmDims, ImageDims, KernelKind, KernelNode, Operand, OperandClass,
    OperatorGraph, Phase, Role, TensorShape, TokenBudget,
};
