//! Versioned JSON model checkpoints.
//!
//! A checkpoint stores the model configuration, its architecture
//! fingerprint, and every named tensor (running statistics included) with
//! its shape. Values are written with shortest round-trip formatting, so a
//! save/load cycle reproduces every bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sertk_core::model::{ModelConfig, ModelParams};
use sertk_core::nn::Tensor;

use crate::error::{format_err, io_err, Error, Result};

pub const FORMAT: &str = "sertk-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfigRecord {
    pub n_mels: usize,
    pub frames: usize,
    pub kernels: Vec<usize>,
    pub kernel_size: usize,
    pub pools: Vec<usize>,
    pub lstm_units: usize,
    pub attention_units: usize,
    pub classes: usize,
    pub elu_alpha: f64,
}

impl From<&ModelConfig> for ModelConfigRecord {
    fn from(c: &ModelConfig) -> Self {
        Self {
            n_mels: c.n_mels,
            frames: c.frames,
            kernels: c.kernels.clone(),
            kernel_size: c.kernel_size,
            pools: c.pools.clone(),
            lstm_units: c.lstm_units,
            attention_units: c.attention_units,
            classes: c.classes,
            elu_alpha: c.elu_alpha,
        }
    }
}

impl From<ModelConfigRecord> for ModelConfig {
    fn from(r: ModelConfigRecord) -> Self {
        Self {
            n_mels: r.n_mels,
            frames: r.frames,
            kernels: r.kernels,
            kernel_size: r.kernel_size,
            pools: r.pools,
            lstm_units: r.lstm_units,
            attention_units: r.attention_units,
            classes: r.classes,
            elu_alpha: r.elu_alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    version: u32,
    architecture: String,
    /// DSP fingerprint of the features the model was trained on, hex.
    dsp_fingerprint: String,
    fold: Option<usize>,
    seed: u64,
    config: ModelConfigRecord,
    tensors: Vec<TensorRecord>,
}

/// A model plus the provenance needed to use it safely.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub dsp_fingerprint: u64,
    pub fold: Option<usize>,
    pub seed: u64,
}

pub fn to_json(c: &Checkpoint) -> Result<String> {
    let cfg = c.params.config();
    let file = CheckpointFile {
        format: FORMAT.into(),
        version: VERSION,
        architecture: cfg.fingerprint(),
        dsp_fingerprint: format!("{:016x}", c.dsp_fingerprint),
        fold: c.fold,
        seed: c.seed,
        config: cfg.into(),
        tensors: c
            .params
            .named_tensors()
            .into_iter()
            .map(|(name, t)| TensorRecord { name, shape: t.shape().to_vec(), data: t.data().to_vec() })
            .collect(),
    };
    serde_json::to_string(&file).map_err(|e| Error::Config(format!("checkpoint serialization: {e}")))
}

pub fn from_json(path: &Path, text: &str) -> Result<Checkpoint> {
    // Check format and version before strict parsing so a newer file gets
    // a version error rather than a field error.
    let probe: serde_json::Value = serde_json::from_str(text).map_err(|e| format_err(path, e))?;
    if probe.get("format").and_then(|f| f.as_str()) != Some(FORMAT) {
        return Err(format_err(path, "not a sertk checkpoint"));
    }
    let version = probe.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
    if version != u64::from(VERSION) {
        return Err(Error::Version { path: path.into(), found: version as u32, supported: VERSION });
    }
    let file: CheckpointFile = serde_json::from_value(probe).map_err(|e| format_err(path, e))?;
    let config: ModelConfig = file.config.into();
    if config.fingerprint() != file.architecture {
        return Err(format_err(
            path,
            format!("architecture fingerprint {} does not match its config ({})", file.architecture, config.fingerprint()),
        ));
    }
    let dsp_fingerprint =
        u64::from_str_radix(&file.dsp_fingerprint, 16).map_err(|e| format_err(path, format!("dsp_fingerprint: {e}")))?;
    let mut params = ModelParams::build(&config, 0)?;
    {
        let mut slots = params.named_tensors_mut();
        if slots.len() != file.tensors.len() {
            return Err(format_err(path, format!("expected {} tensors, found {}", slots.len(), file.tensors.len())));
        }
        for ((name, slot), rec) in slots.iter_mut().zip(file.tensors) {
            if *name != rec.name {
                return Err(format_err(path, format!("expected tensor {name}, found {}", rec.name)));
            }
            if slot.shape() != rec.shape.as_slice() {
                return Err(format_err(path, format!("tensor {name}: shape {:?}, expected {:?}", rec.shape, slot.shape())));
            }
            **slot = Tensor::from_vec(&rec.shape, rec.data).map_err(|e| format_err(path, format!("tensor {name}: {e}")))?;
        }
    }
    Ok(Checkpoint { params, dsp_fingerprint, fold: file.fold, seed: file.seed })
}

pub fn save(path: &Path, c: &Checkpoint) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, to_json(c)?).map_err(io_err(path))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    from_json(path, &text)
}
