//! Experiment description: which model on which platform under which
//! workload, loaded from a JSON file and/or command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use chipsim::engine::SweepAxis;
use chipsim::mapper::MapperOptions;
use chipsim::workload::ImageDims;
use chipsim::{presets, Experiment, ModelConfig, PlacementPolicy, PlatformSpec, Workload};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: String,
    pub values: String,
}

/// On-disk experiment config. Every field is optional so that flags can
/// fill in or override it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Model preset name or path to a model JSON file.
    pub model: Option<String>,
    /// Hardware preset name or path to a platform JSON file.
    pub hw: Option<String>,
    pub policy: Option<String>,
    pub workload: Option<Workload>,
    pub mapper: Option<MapperOptions>,
    pub sweep: Option<SweepSpec>,
    pub out: Option<PathBuf>,
}

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::MissingFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn looks_like_path(s: &str) -> bool {
    s.contains('/') || s.contains('\\') || s.ends_with(".json")
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read(path)?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
            CliError::schema(format!("experiment config {}", path.display()), e.into())
        })?;
        // file references are relative to the config's directory
        let base = path.parent().unwrap_or(Path::new(""));
        for f in [&mut cfg.model, &mut cfg.hw].into_iter().flatten() {
            if looks_like_path(f) && Path::new(f.as_str()).is_relative() {
                *f = base.join(&*f).to_string_lossy().into_owned();
            }
        }
        if let Some(out) = &mut cfg.out {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(cfg)
    }

    pub fn model(&self) -> Result<ModelConfig> {
        let name = self.model.as_deref().unwrap_or("fastvlm_0_6b");
        if looks_like_path(name) || Path::new(name).is_file() {
            let path = Path::new(name);
            return ModelConfig::from_json(&read(path)?)
                .map_err(|e| CliError::schema(format!("model config {}", path.display()), e));
        }
        presets::model(name).map_err(|e| CliError::schema("--model", e))
    }

    pub fn platform(&self) -> Result<PlatformSpec> {
        let name = self.hw.as_deref().unwrap_or("heterogeneous");
        if looks_like_path(name) || Path::new(name).is_file() {
            let path = Path::new(name);
            return PlatformSpec::from_json(&read(path)?)
                .map_err(|e| CliError::schema(format!("hardware config {}", path.display()), e));
        }
        presets::platform(name).map_err(|e| CliError::schema("--hw", e))
    }

    pub fn experiment(&self) -> Result<Experiment> {
        let platform = self.platform()?;
        let mut e = Experiment::new(self.model()?, platform);
        if let Some(p) = &self.policy {
            e.policy = PlacementPolicy::parse(p).map_err(|err| CliError::schema("policy", err))?;
        }
        if let Some(w) = self.workload {
            e.workload = w;
        }
        if let Some(m) = self.mapper {
            m.validate()
                .map_err(|err| CliError::schema("mapper", err))?;
            e.mapper = m;
        }
        Ok(e)
    }

    pub fn sweep_axis(&self) -> Result<Option<(SweepAxis, String)>> {
        match &self.sweep {
            None => Ok(None),
            Some(s) => {
                let axis =
                    SweepAxis::parse(&s.axis).map_err(|e| CliError::schema("sweep.axis", e))?;
                Ok(Some((axis, s.values.clone())))
            }
        }
    }
}

/// Parses `WIDTHxHEIGHT`, or `none` for a text-only request.
pub fn parse_image(s: &str) -> std::result::Result<Option<ImageDims>, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT or none, got `{s}`"))?;
    let dim = |v: &str| {
        v.trim()
            .parse::<u32>()
            .map_err(|_| format!("bad image dimension `{v}`"))
    };
    Ok(Some(ImageDims {
        width: dim(w)?,
        height: dim(h)?,
    }))
}
