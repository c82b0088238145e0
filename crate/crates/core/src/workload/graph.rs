use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorShape {
    pub rows: u32,
    pub cols: u32,
    pub element_size: u32,
}

impl TensorShape {
    pub fn new(rows: u32, cols: u32, element_size: u32) -> Self {
        debug_assert!(rows >= 1 && cols >= 1, "empty tensor {rows}x{cols}");
        TensorShape {
            rows,
            cols,
            element_size,
        }
    }

    pub fn elements(&self) -> u64 {
        self.rows as u64 * self.cols as u64
    }

    pub fn bytes(&self) -> u64 {
        self.elements() * self.element_size as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KernelKind {
    Gemm,
    Softmax,
    Elementwise,
    Norm,
    Activation,
    KvAppend,
    KvRead,
    Transfer,
}

impl KernelKind {
    /// Kinds that run on a special-function unit rather than the tensor core.
    pub fn is_sfpe(self) -> bool {
        matches!(
            self,
            KernelKind::Softmax
                | KernelKind::Elementwise
                | KernelKind::Norm
                | KernelKind::Activation
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Gemm => "gemm",
            KernelKind::Softmax => "softmax",
            KernelKind::Elementwise => "elementwise",
            KernelKind::Norm => "norm",
            KernelKind::Activation => "activation",
            KernelKind::KvAppend => "kv_append",
            KernelKind::KvRead => "kv_read",
            KernelKind::Transfer => "transfer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Encode,
    Connect,
    Prefill,
    DecodeStep,
}

impl Phase {
    pub const ALL: [Phase; 4] = [
        Phase::Encode,
        Phase::Connect,
        Phase::Prefill,
        Phase::DecodeStep,
    ];

    pub fn is_backbone(self) -> bool {
        matches!(self, Phase::Prefill | Phase::DecodeStep)
    }
}

/// What a kernel computes inside the model. Drives placement, fusion and
/// weight lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    PatchEmbed,
    EncNorm,
    EncQkv,
    EncAttnScore,
    EncAttnSoftmax,
    EncAttnValue,
    EncOutProj,
    EncConvMixer,
    EncResidual,
    EncMlpUp,
    EncMlpAct,
    EncMlpDown,
    EncDownsample,
    EncHead,
    ConnGemm,
    ConnAct,
    ConnPool,
    ConnKvProj,
    ConnAttnScore,
    ConnAttnSoftmax,
    ConnAttnValue,
    ConnOutProj,
    AttnNorm,
    QProj,
    QBias,
    KProj,
    KBias,
    VProj,
    VBias,
    KvAppend,
    KvRead,
    AttnScore,
    AttnSoftmax,
    AttnValue,
    OutProj,
    AttnResidual,
    FfnNorm,
    FfnUp,
    FfnUpBias,
    FfnAct,
    FfnDown,
    FfnDownBias,
    FfnResidual,
    FinalNorm,
    LmHead,
}

impl Role {
    /// Backbone feed-forward kernels, the ones whose weights live in RRAM
    /// under the heterogeneous policy.
    pub fn is_ffn(self) -> bool {
        matches!(
            self,
            Role::FfnUp | Role::FfnUpBias | Role::FfnAct | Role::FfnDown | Role::FfnDownBias
        )
    }

    pub fn is_score(self) -> bool {
        matches!(
            self,
            Role::AttnScore | Role::EncAttnScore | Role::ConnAttnScore
        )
    }

    pub fn is_norm(self) -> bool {
        matches!(
            self,
            Role::EncNorm | Role::AttnNorm | Role::FfnNorm | Role::FinalNorm
        )
    }
}

/// Where an operand comes from, which decides how its bytes are charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperandClass {
    Activation,
    Weight,
    KvCache,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Operand {
    pub shape: TensorShape,
    pub class: OperandClass,
    /// Producing kernel for activations; `None` for weights, cache reads and
    /// graph inputs such as token embeddings.
    pub source: Option<u32>,
}

impl Operand {
    pub fn activation(shape: TensorShape, source: Option<u32>) -> Self {
        Operand {
            shape,
            class: OperandClass::Activation,
            source,
        }
    }

    pub fn weight(shape: TensorShape) -> Self {
        Operand {
            shape,
            class: OperandClass::Weight,
            source: None,
        }
    }

    pub fn kv(shape: TensorShape) -> Self {
        Operand {
            shape,
            class: OperandClass::KvCache,
            source: None,
        }
    }
}

/// Batched GEMM `batch x (m x k) . (k x n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GemmDims {
    pub batch: u32,
    pub m: u32,
    pub k: u32,
    pub n: u32,
}

impl GemmDims {
    pub fn flops(&self) -> u64 {
        self.batch as u64 * flops_of_gemm(self.m as u64, self.n as u64, self.k as u64)
    }
}

pub fn flops_of_gemm(m: u64, n: u64, k: u64) -> u64 {
    2 * m * n * k
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelNode {
    pub id: u32,
    pub kind: KernelKind,
    pub role: Role,
    pub phase: Phase,
    pub layer_index: u32,
    /// Decode step (1-based); 0 outside the decode phase.
    pub step: u32,
    pub gemm: Option<GemmDims>,
    pub operand_shapes: SmallVec<[Operand; 3]>,
    pub output: TensorShape,
    pub flops: u64,
    pub deps: SmallVec<[u32; 3]>,
}

impl KernelNode {
    pub fn bytes_read(&self) -> u64 {
        self.operand_shapes.iter().map(|o| o.shape.bytes()).sum()
    }

    pub fn bytes_written(&self) -> u64 {
        self.output.bytes()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub prompt_text_tokens: u32,
    pub visual_tokens: u32,
    pub output_tokens: u32,
}

impl TokenBudget {
    pub fn prefill_len(&self) -> u32 {
        self.prompt_text_tokens + self.visual_tokens
    }

    /// KV cache length seen by decode step `t`.
    pub fn ctx_at_step(&self, t: u32) -> u32 {
        self.prefill_len() + t
    }

    pub fn max_context(&self) -> u32 {
        self.ctx_at_step(self.output_tokens)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageDims {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone)]
pub struct OperatorGraph {
    pub model: String,
    pub num_layers: u32,
    pub nodes: Vec<KernelNode>,
    pub entry: Vec<u32>,
    pub exit: Vec<u32>,
    pub budget: TokenBudget,
    pub kv_bytes_per_token_per_layer: u64,
    /// First node id of each decode step; index 0 is step 1.
    pub step_starts: Vec<u32>,
}

impl OperatorGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: u32) -> &KernelNode {
        &self.nodes[id as usize]
    }

    pub fn has_phase(&self, phase: Phase) -> bool {
        self.nodes.iter().any(|n| n.phase == phase)
    }

    /// Node ids of decode step `t` (1-based).
    pub fn step_range(&self, t: u32) -> std::ops::Range<u32> {
        let i = (t - 1) as usize;
        let end = self
            .step_starts
            .get(i + 1)
            .copied()
            .unwrap_or(self.nodes.len() as u32);
        self.step_starts[i]..end
    }

    pub fn total_flops(&self) -> u64 {
        self.nodes.iter().map(|n| n.flops).sum()
    }

    /// Kahn's algorithm; errors if the dependency relation has a cycle or
    /// refers to an unknown node.
    pub fn topo_order(&self) -> Result<Vec<u32>> {
        let n = self.nodes.len();
        let mut indeg = vec![0u32; n];
        let mut users: Vec<Vec<u32>> = vec![Vec::new(); n];
        for node in &self.nodes {
            for &d in &node.deps {
                if d as usize >= n {
                    return Err(Error::Mapping(format!(
                        "kernel {} depends on unknown kernel {d}",
                        node.id
                    )));
                }
                indeg[node.id as usize] += 1;
                users[d as usize].push(node.id);
            }
        }
        let mut queue: VecDeque<u32> = (0..n as u32).filter(|&i| indeg[i as usize] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(id) = queue.pop_front() {
            order.push(id);
            for &u in &users[id as usize] {
                indeg[u as usize] -= 1;
                if indeg[u as usize] == 0 {
                    queue.push_back(u);
                }
            }
        }
        if order.len() != n {
            let stuck = (0..n).find(|&i| indeg[i] > 0).unwrap() as u32;
            let on = self.nodes[stuck as usize]
                .deps
                .iter()
                .copied()
                .find(|&d| indeg[d as usize] > 0)
                .unwrap_or(stuck);
            return Err(Error::Deadlock {
                waiting: stuck,
                blocked_on: on,
            });
        }
        Ok(order)
    }
}
