use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderKind {
    /// Plain vision transformer; the image is resized to the encoder input
    /// and the token count is fixed.
    ViT,
    /// Pyramid vision transformer (four downsampling stages).
    PVT,
    /// Hybrid conv/attention encoder with five downsampling stages.
    FastViTHD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConnectorKind {
    MLP,
    CrossAttention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    GELU,
    SiLU,
    ReLU,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    LayerNorm,
    RMSNorm,
}

/// Token mixer used by an encoder stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MixerKind {
    Attention,
    /// Depthwise convolution mixer (RepMixer style).
    Conv,
}

/// One encoder stage at the reference input resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderStage {
    pub tokens: u32,
    pub width: u32,
    pub depth: u32,
    pub mlp_ratio: u32,
    pub mixer: MixerKind,
    #[serde(default = "default_kernel_size")]
    pub kernel_size: u32,
}

fn default_kernel_size() -> u32 {
    7
}

fn default_element_size() -> u32 {
    2
}

fn default_activation() -> Activation {
    Activation::GELU
}

fn default_norm() -> NormKind {
    NormKind::LayerNorm
}

/// Dimensions of a multimodal LLM: vision encoder, connector and
/// transformer backbone.
///
/// Loaded from JSON; unknown keys are rejected so that typos surface as
/// errors naming the offending key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub hidden_dim: u32,
    pub num_layers: u32,
    pub num_heads: u32,
    pub head_dim: u32,
    pub ffn_dim: u32,
    pub vocab_size: u32,
    pub encoder_kind: EncoderKind,
    /// Visual tokens emitted by the encoder at the reference resolution.
    pub encoder_tokens_out: u32,
    /// Reference input resolution `[width, height]` in pixels.
    pub encoder_input_px: [u32; 2],
    pub encoder_stages: Vec<EncoderStage>,
    pub connector_kind: ConnectorKind,
    /// Layer widths of the connector, first = encoder feature width,
    /// last = `hidden_dim`.
    pub connector_dims: Vec<u32>,
    /// Tokens handed to the backbone after the connector. Defaults to
    /// `encoder_tokens_out`; smaller values model token-reducing projectors.
    #[serde(default)]
    pub visual_tokens: Option<u32>,
    #[serde(default = "default_element_size")]
    pub element_size: u32,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_norm")]
    pub norm: NormKind,
    /// Free-form provenance of the dimensions.
    #[serde(default)]
    pub source: String,
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ModelConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden_dim", self.hidden_dim),
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("head_dim", self.head_dim),
            ("ffn_dim", self.ffn_dim),
            ("vocab_size", self.vocab_size),
            ("encoder_tokens_out", self.encoder_tokens_out),
            ("element_size", self.element_size),
        ];
        for (field, value) in positive {
            if value == 0 {
                return Err(Error::field(field, "must be positive"));
            }
        }
        if self.encoder_input_px.contains(&0) {
            return Err(Error::field("encoder_input_px", "must be positive"));
        }
        if self.num_heads * self.head_dim != self.hidden_dim {
            return Err(Error::field(
                "hidden_dim",
                format!(
                    "{} != num_heads ({}) x head_dim ({})",
                    self.hidden_dim, self.num_heads, self.head_dim
                ),
            ));
        }
        for (i, stage) in self.encoder_stages.iter().enumerate() {
            if stage.tokens == 0
                || stage.width == 0
                || stage.depth == 0
                || stage.mlp_ratio == 0
                || stage.kernel_size == 0
            {
                return Err(Error::field(
                    format!("encoder_stages[{i}]"),
                    "all stage dims must be positive",
                ));
            }
        }
        if self.encoder_stages.is_empty() {
            return Err(Error::field(
                "encoder_stages",
                "at least one stage required",
            ));
        }
        let last_stage = self.encoder_stages.last().unwrap().tokens;
        if last_stage != self.encoder_tokens_out {
            return Err(Error::field(
                "encoder_tokens_out",
                format!("final encoder stage emits {last_stage} tokens"),
            ));
        }
        if self.connector_dims.len() < 2 {
            return Err(Error::field(
                "connector_dims",
                "need at least an input and an output width",
            ));
        }
        if self.connector_dims.contains(&0) {
            return Err(Error::field("connector_dims", "widths must be positive"));
        }
        let last = *self.connector_dims.last().unwrap();
        if last != self.hidden_dim {
            return Err(Error::field(
                "connector_dims",
                format!(
                    "last width {last} does not match hidden_dim {}",
                    self.hidden_dim
                ),
            ));
        }
        if let Some(v) = self.visual_tokens {
            if v == 0 || v > self.encoder_tokens_out {
                return Err(Error::field(
                    "visual_tokens",
                    "must be in 1..=encoder_tokens_out",
                ));
            }
        }
        Ok(())
    }

    /// K and V bytes stored per token per layer.
    pub fn kv_bytes_per_token_per_layer(&self) -> u64 {
        2 * self.hidden_dim as u64 * self.element_size as u64
    }

    pub fn visual_tokens_at_reference(&self) -> u32 {
        self.visual_tokens.unwrap_or(self.encoder_tokens_out)
    }

    /// FP weights of all FFN matrices (two GEMMs per layer).
    pub fn ffn_weight_bytes(&self) -> u64 {
        2 * self.hidden_dim as u64
            * self.ffn_dim as u64
            * self.element_size as u64
            * self.num_layers as u64
    }

    /// Q, K, V and output projection weights of all layers.
    pub fn attention_weight_bytes(&self) -> u64 {
        4 * (self.hidden_dim as u64).pow(2) * self.element_size as u64 * self.num_layers as u64
    }
}
