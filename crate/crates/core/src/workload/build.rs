use smallvec::SmallVec;

use super::config::{ConnectorKind, EncoderKind, MixerKind, ModelConfig, NormKind};
use super::graph::{
    GemmDims, ImageDims, KernelKind, KernelNode, Operand, OperatorGraph, Phase, Role, TensorShape,
    TokenBudget,
};
use crate::error::{Error, Result};

/// Head width assumed for encoder and connector attention.
const ENCODER_HEAD_DIM: u32 = 64;

/// Nominal FLOPs per element for special-function kernels.
fn sfpe_flops_per_element(kind: KernelKind) -> u64 {
    match kind {
        KernelKind::Softmax | KernelKind::Norm => 5,
        KernelKind::Activation => 4,
        KernelKind::Elementwise => 1,
        _ => 0,
    }
}

struct Builder {
    nodes: Vec<KernelNode>,
    es: u32,
    phase: Phase,
    layer: u32,
    step: u32,
}

impl Builder {
    fn shape(&self, rows: u32, cols: u32) -> TensorShape {
        TensorShape::new(rows.max(1), cols.max(1), self.es)
    }

    fn push(
        &mut self,
        kind: KernelKind,
        role: Role,
        gemm: Option<GemmDims>,
        operands: &[Operand],
        output: TensorShape,
        extra_deps: &[u32],
    ) -> u32 {
        let id = self.nodes.len() as u32;
        let mut deps: SmallVec<[u32; 3]> = SmallVec::new();
        for d in operands
            .iter()
            .filter_map(|o| o.source)
            .chain(extra_deps.iter().copied())
        {
            if !deps.contains(&d) {
                deps.push(d);
            }
        }
        let flops = match gemm {
            Some(g) => g.flops(),
            None => output.elements() * sfpe_flops_per_element(kind),
        };
        self.nodes.push(KernelNode {
            id,
            kind,
            role,
            phase: self.phase,
            layer_index: self.layer,
            step: self.step,
            gemm,
            operand_shapes: operands.iter().copied().collect(),
            output,
            flops,
            deps,
        });
        id
    }

    fn out(&self, id: u32) -> TensorShape {
        self.nodes[id as usize].output
    }

    fn act_of(&self, id: u32) -> Operand {
        Operand::activation(self.out(id), Some(id))
    }

    /// `rows x k` activation times a `k x n` weight matrix.
    fn linear(&mut self, role: Role, input: Operand, n: u32, extra: &[u32]) -> u32 {
        let rows = input.shape.rows;
        let k = input.shape.cols;
        let gemm = GemmDims {
            batch: 1,
            m: rows,
            k,
            n,
        };
        let w = Operand::weight(self.shape(k, n));
        let out = self.shape(rows, n);
        self.push(KernelKind::Gemm, role, Some(gemm), &[input, w], out, extra)
    }

    fn bias(&mut self, role: Role, input: u32) -> u32 {
        let out = self.out(input);
        let b = Operand::weight(self.shape(1, out.cols));
        self.push(
            KernelKind::Elementwise,
            role,
            None,
            &[self.act_of(input), b],
            out,
            &[],
        )
    }

    fn norm(&mut self, role: Role, input: Operand, kind: NormKind, extra: &[u32]) -> u32 {
        let params = match kind {
            NormKind::LayerNorm => 2,
            NormKind::RMSNorm => 1,
        };
        let g = Operand::weight(self.shape(params, input.shape.cols));
        let out = input.shape;
        self.push(KernelKind::Norm, role, None, &[input, g], out, extra)
    }

    fn residual(&mut self, role: Role, a: u32, b: Operand) -> u32 {
        let out = self.out(a);
        self.push(
            KernelKind::Elementwise,
            role,
            None,
            &[self.act_of(a), b],
            out,
            &[],
        )
    }

    fn activation(&mut self, role: Role, input: u32) -> u32 {
        let out = self.out(input);
        self.push(
            KernelKind::Activation,
            role,
            None,
            &[self.act_of(input)],
            out,
            &[],
        )
    }

    /// Score, softmax and value kernels of multi-head attention with `q_rows`
    /// queries over `kv_rows` keys. Returns the value-GEMM id.
    #[allow(clippy::too_many_arguments)]
    fn attention(
        &mut self,
        roles: [Role; 3],
        q: Operand,
        k: Operand,
        v: Operand,
        heads: u32,
        head_dim: u32,
        q_rows: u32,
        kv_rows: u32,
    ) -> u32 {
        let score_dims = GemmDims {
            batch: heads,
            m: q_rows,
            k: head_dim,
            n: kv_rows,
        };
        let score_out = self.shape(heads * q_rows, kv_rows);
        let score = self.push(
            KernelKind::Gemm,
            roles[0],
            Some(score_dims),
            &[q, k],
            score_out,
            &[],
        );
        let soft = self.push(
            KernelKind::Softmax,
            roles[1],
            None,
            &[self.act_of(score)],
            score_out,
            &[],
        );
        let value_dims = GemmDims {
            batch: heads,
            m: q_rows,
            k: kv_rows,
            n: head_dim,
        };
        let value_out = self.shape(q_rows, heads * head_dim);
        self.push(
            KernelKind::Gemm,
            roles[2],
            Some(value_dims),
            &[self.act_of(soft), v],
            value_out,
            &[],
        )
    }
}

/// Decomposes a multimodal LLM into kernels: vision encoder, connector, one
/// prefill pass and `output_tokens` decode steps.
///
/// `visual_input = None` builds a text-only graph without encode and connect
/// phases.
pub fn build_graph(
    cfg: &ModelConfig,
    prompt_tokens: u32,
    visual_input: Option<ImageDims>,
    output_tokens: u32,
) -> Result<OperatorGraph> {
    cfg.validate()?;
    if prompt_tokens == 0 {
        return Err(Error::field("prompt_tokens", "must be at least 1"));
    }
    if output_tokens == 0 {
        return Err(Error::field("output_tokens", "must be at least 1"));
    }
    if let Some(img) = visual_input {
        if img.width == 0 || img.height == 0 {
            return Err(Error::field("image", "dimensions must be positive"));
        }
    }

    let mut b = Builder {
        nodes: Vec::new(),
        es: cfg.element_size,
        phase: Phase::Encode,
        layer: 0,
        step: 0,
    };

    let (visual_tokens, connector_out) = match visual_input {
        Some(img) => {
            let (enc_out, enc_tokens) = build_encoder(&mut b, cfg, img);
            let visual = scaled_visual_tokens(cfg, img).min(enc_tokens);
            let conn = build_connector(&mut b, cfg, enc_out, visual);
            (visual, Some(conn))
        }
        None => (0, None),
    };

    let budget = TokenBudget {
        prompt_text_tokens: prompt_tokens,
        visual_tokens,
        output_tokens,
    };
    let p = budget.prefill_len();

    // Prefill over prompt and visual tokens.
    b.phase = Phase::Prefill;
    let h = cfg.hidden_dim;
    let mut x = Operand::activation(b.shape(p, h), connector_out);
    for l in 0..cfg.num_layers {
        b.layer = l;
        let out = backbone_layer(&mut b, cfg, x, p, p, &[]);
        x = b.act_of(out);
    }
    let (mut last_ffn, mut last_head) = lm_head(&mut b, cfg, x.source.unwrap());

    let mut step_starts = Vec::with_capacity(output_tokens as usize);
    b.phase = Phase::DecodeStep;
    for t in 1..=output_tokens {
        b.step = t;
        step_starts.push(b.nodes.len() as u32);
        let ctx = budget.ctx_at_step(t);
        let mut x = Operand::activation(b.shape(1, h), None);
        let chain = [last_head, last_ffn];
        for l in 0..cfg.num_layers {
            b.layer = l;
            let out = backbone_layer(&mut b, cfg, x, 1, ctx, if l == 0 { &chain } else { &[] });
            x = b.act_of(out);
        }
        (last_ffn, last_head) = lm_head(&mut b, cfg, x.source.unwrap());
    }

    let n = b.nodes.len();
    let mut used = vec![false; n];
    for node in &b.nodes {
        for &d in &node.deps {
            used[d as usize] = true;
        }
    }
    let entry = b
        .nodes
        .iter()
        .filter(|n| n.deps.is_empty())
        .map(|n| n.id)
        .collect();
    let exit = (0..n as u32).filter(|&i| !used[i as usize]).collect();

    Ok(OperatorGraph {
        model: cfg.name.clone(),
        num_layers: cfg.num_layers,
        nodes: b.nodes,
        entry,
        exit,
        budget,
        kv_bytes_per_token_per_layer: cfg.kv_bytes_per_token_per_layer(),
        step_starts,
    })
}

fn area_scale(cfg: &ModelConfig, img: ImageDims) -> f64 {
    match cfg.encoder_kind {
        EncoderKind::ViT => 1.0,
        EncoderKind::PVT | EncoderKind::FastViTHD => {
            let [w, h] = cfg.encoder_input_px;
            (img.width as f64 * img.height as f64) / (w as f64 * h as f64)
        }
    }
}

fn scale_tokens(tokens: u32, scale: f64) -> u32 {
    ((tokens as f64 * scale).round() as u32).max(1)
}

fn scaled_visual_tokens(cfg: &ModelConfig, img: ImageDims) -> u32 {
    scale_tokens(cfg.visual_tokens_at_reference(), area_scale(cfg, img))
}

/// Returns the id of the last encoder kernel and the number of tokens it emits.
fn build_encoder(b: &mut Builder, cfg: &ModelConfig, img: ImageDims) -> (u32, u32) {
    b.phase = Phase::Encode;
    let scale = area_scale(cfg, img);
    let [rw, rh] = cfg.encoder_input_px;
    let stages = &cfg.encoder_stages;
    let patch_area = ((rw as u64 * rh as u64) / stages[0].tokens as u64).max(1) as u32;

    let mut block = 0u32;
    b.layer = 0;
    let t0 = scale_tokens(stages[0].tokens, scale);
    let image = Operand::activation(b.shape(t0, 3 * patch_area), None);
    let mut cur = b.linear(Role::PatchEmbed, image, stages[0].width, &[]);
    let mut prev_tokens = t0;

    for (s, stage) in stages.iter().enumerate() {
        let tokens = scale_tokens(stage.tokens, scale);
        let w = stage.width;
        if s > 0 {
            b.layer = s as u32;
            let stride = (prev_tokens / tokens).max(1);
            let prev_w = b.out(cur).cols;
            let input = Operand::activation(b.shape(tokens, prev_w * stride), Some(cur));
            cur = b.linear(Role::EncDownsample, input, w, &[]);
        }
        for _ in 0..stage.depth {
            b.layer = block;
            block += 1;
            let input = b.act_of(cur);
            let mixed = match stage.mixer {
                MixerKind::Attention => {
                    let n = b.norm(Role::EncNorm, input, cfg.norm, &[]);
                    let qkv = b.linear(Role::EncQkv, b.act_of(n), 3 * w, &[]);
                    let heads = (w / ENCODER_HEAD_DIM).max(1);
                    let hd = w / heads;
                    let part = Operand::activation(b.shape(tokens, w), Some(qkv));
                    let attn = b.attention(
                        [Role::EncAttnScore, Role::EncAttnSoftmax, Role::EncAttnValue],
                        part,
                        part,
                        part,
                        heads,
                        hd,
                        tokens,
                        tokens,
                    );
                    b.linear(Role::EncOutProj, b.act_of(attn), w, &[])
                }
                MixerKind::Conv => {
                    let k2 = stage.kernel_size * stage.kernel_size;
                    let dims = GemmDims {
                        batch: w,
                        m: tokens,
                        k: k2,
                        n: 1,
                    };
                    let wt = Operand::weight(b.shape(w, k2));
                    let out = b.shape(tokens, w);
                    b.push(
                        KernelKind::Gemm,
                        Role::EncConvMixer,
                        Some(dims),
                        &[input, wt],
                        out,
                        &[],
                    )
                }
            };
            let r1 = b.residual(Role::EncResidual, mixed, input);
            let n2 = b.norm(Role::EncNorm, b.act_of(r1), cfg.norm, &[]);
            let up = b.linear(Role::EncMlpUp, b.act_of(n2), stage.mlp_ratio * w, &[]);
            let act = b.activation(Role::EncMlpAct, up);
            let down = b.linear(Role::EncMlpDown, b.act_of(act), w, &[]);
            cur = b.residual(Role::EncResidual, down, b.act_of(r1));
        }
        prev_tokens = tokens;
    }

    let head_in = cfg.connector_dims[0];
    if b.out(cur).cols != head_in {
        b.layer = 0;
        cur = b.linear(Role::EncHead, b.act_of(cur), head_in, &[]);
    }
    (cur, prev_tokens)
}

fn build_connector(b: &mut Builder, cfg: &ModelConfig, enc_out: u32, visual: u32) -> u32 {
    b.phase = Phase::Connect;
    let dims = &cfg.connector_dims;
    let h = cfg.hidden_dim;
    let tokens = b.out(enc_out).rows;
    match cfg.connector_kind {
        ConnectorKind::MLP => {
            let mut cur = enc_out;
            for i in 0..dims.len() - 1 {
                b.layer = i as u32;
                cur = b.linear(Role::ConnGemm, b.act_of(cur), dims[i + 1], &[]);
                if i + 2 < dims.len() {
                    cur = b.activation(Role::ConnAct, cur);
                }
            }
            if visual < tokens {
                b.layer = 0;
                let out = b.shape(visual, h);
                cur = b.push(
                    KernelKind::Elementwise,
                    Role::ConnPool,
                    None,
                    &[b.act_of(cur)],
                    out,
                    &[],
                );
            }
            cur
        }
        ConnectorKind::CrossAttention => {
            b.layer = 0;
            let kv = b.linear(Role::ConnKvProj, b.act_of(enc_out), 2 * h, &[]);
            let queries = Operand::weight(b.shape(visual, h));
            let part = Operand::activation(b.shape(tokens, h), Some(kv));
            let attn = b.attention(
                [
                    Role::ConnAttnScore,
                    Role::ConnAttnSoftmax,
                    Role::ConnAttnValue,
                ],
                queries,
                part,
                part,
                cfg.num_heads,
                cfg.head_dim,
                visual,
                tokens,
            );
            b.linear(Role::ConnOutProj, b.act_of(attn), h, &[])
        }
    }
}

/// One transformer layer over `rows` new tokens with `ctx` cached tokens
/// (including the new ones). Returns the id of the final residual add.
fn backbone_layer(
    b: &mut Builder,
    cfg: &ModelConfig,
    x: Operand,
    rows: u32,
    ctx: u32,
    chain: &[u32],
) -> u32 {
    let h = cfg.hidden_dim;
    let n1 = b.norm(Role::AttnNorm, x, cfg.norm, chain);
    let xn = b.act_of(n1);
    let q = b.linear(Role::QProj, xn, h, &[]);
    let q = b.bias(Role::QBias, q);
    let k = b.linear(Role::KProj, xn, h, &[]);
    let k = b.bias(Role::KBias, k);
    let v = b.linear(Role::VProj, xn, h, &[]);
    let v = b.bias(Role::VBias, v);

    let kv_new = b.shape(2 * rows, h);
    let append = b.push(
        KernelKind::KvAppend,
        Role::KvAppend,
        None,
        &[b.act_of(k), b.act_of(v)],
        kv_new,
        &[],
    );
    let kv_all = b.shape(2 * ctx, h);
    let read = b.push(
        KernelKind::KvRead,
        Role::KvRead,
        None,
        &[Operand::kv(kv_all)],
        kv_all,
        &[append],
    );
    let cached = Operand::activation(b.shape(ctx, h), Some(read));
    let attn = b.attention(
        [Role::AttnScore, Role::AttnSoftmax, Role::AttnValue],
        b.act_of(q),
        cached,
        cached,
        cfg.num_heads,
        cfg.head_dim,
        rows,
        ctx,
    );
    let o = b.linear(Role::OutProj, b.act_of(attn), h, &[]);
    let r1 = b.residual(Role::AttnResidual, o, x);

    let n2 = b.norm(Role::FfnNorm, b.act_of(r1), cfg.norm, &[]);
    let up = b.linear(Role::FfnUp, b.act_of(n2), cfg.ffn_dim, &[]);
    let up = b.bias(Role::FfnUpBias, up);
    let act = b.activation(Role::FfnAct, up);
    let down = b.linear(Role::FfnDown, b.act_of(act), h, &[]);
    let down = b.bias(Role::FfnDownBias, down);
    b.residual(Role::FfnResidual, down, b.act_of(r1))
}

/// Final norm and vocabulary projection of the last row. Returns
/// `(last layer output, lm head)`.
fn lm_head(b: &mut Builder, cfg: &ModelConfig, last: u32) -> (u32, u32) {
    b.layer = cfg.num_layers;
    let row = Operand::activation(b.shape(1, cfg.hidden_dim), Some(last));
    let n = b.norm(Role::FinalNorm, row, cfg.norm, &[]);
    let head = b.linear(Role::LmHead, b.act_of(n), cfg.vocab_size, &[]);
    (last, head)
}
