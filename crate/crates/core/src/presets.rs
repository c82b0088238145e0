//! Shipped model, platform and baseline configurations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hardware::PlatformSpec;
use crate::workload::ModelConfig;

const HETEROGENEOUS: &str = include_str!("../presets/heterogeneous.json");
const DRAM_ONLY: &str = include_str!("../presets/dram_only.json");
const BASELINES: &str = include_str!("../presets/baselines.json");

const MODELS: [(&str, &str); 4] = [
    (
        "fastvlm_0_6b",
        include_str!("../presets/models/fastvlm_0_6b.json"),
    ),
    (
        "fastvlm_1_7b",
        include_str!("../presets/models/fastvlm_1_7b.json"),
    ),
    (
        "mobilevlm_1_7b",
        include_str!("../presets/models/mobilevlm_1_7b.json"),
    ),
    (
        "mobilevlm_3b",
        include_str!("../presets/models/mobilevlm_3b.json"),
    ),
];

/// Preset keys in figure order: smallest to largest within each family.
pub const MODEL_KEYS: [&str; 4] = [
    "fastvlm_0_6b",
    "fastvlm_1_7b",
    "mobilevlm_1_7b",
    "mobilevlm_3b",
];

pub const PLATFORM_KEYS: [&str; 2] = ["heterogeneous", "dram-only"];

fn normalize(name: &str) -> String {
    name.trim()
        .to_ascii_lowercase()
        .chars()
        .map(|c| if c == '-' || c == '.' { '_' } else { c })
        .collect()
}

pub fn model(name: &str) -> Result<ModelConfig> {
    let key = normalize(name);
    let text = MODELS
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))?;
    ModelConfig::from_json(text)
}

pub fn models() -> Vec<ModelConfig> {
    MODEL_KEYS
        .iter()
        .map(|k| model(k).expect("shipped model parses"))
        .collect()
}

pub fn heterogeneous() -> PlatformSpec {
    PlatformSpec::from_json(HETEROGENEOUS).expect("shipped platform parses")
}

pub fn dram_only() -> PlatformSpec {
    PlatformSpec::from_json(DRAM_ONLY).expect("shipped platform parses")
}

pub fn platform(name: &str) -> Result<PlatformSpec> {
    match normalize(name).as_str() {
        "heterogeneous" | "het" => Ok(heterogeneous()),
        "dram_only" => Ok(dram_only()),
        _ => Err(Error::UnknownPreset(name.to_string())),
    }
}

/// Published numbers of a reference platform, imported as constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineRecord {
    pub name: String,
    pub display_name: String,
    pub throughput_token_per_s: [f64; 2],
    pub power_w: [f64; 2],
    pub token_per_j: [f64; 2],
    pub area_mm2: f64,
    pub source: String,
}

impl BaselineRecord {
    pub fn is_ordered(&self) -> bool {
        [self.throughput_token_per_s, self.power_w, self.token_per_j]
            .iter()
            .all(|[lo, hi]| lo <= hi)
    }
}

pub fn baselines() -> Vec<BaselineRecord> {
    serde_json::from_str(BASELINES).expect("shipped baselines parse")
}

pub fn baseline(name: &str) -> Result<BaselineRecord> {
    let key = normalize(name);
    baselines()
        .into_iter()
        .find(|b| b.name == key)
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))
}
