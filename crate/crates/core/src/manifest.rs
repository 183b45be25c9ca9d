//! Fine-tuning configuration handed to the trainer as `train_manifest.json`.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::jsonl;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "train_manifest.json";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("invalid train config: {0}")]
    Invalid(String),
    #[error("unsupported manifest schema version {0}")]
    Version(u32),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

/// Adapted weight matrices. `Projection` is the attention output projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetWeight {
    Query,
    Key,
    Value,
    Projection,
}

/// Fields missing on input take the defaults of [`default_paper_config`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub base_model: String,
    pub context_tokens: u32,
    pub lora_rank: u32,
    pub lora_alpha: u32,
    pub target_weights: Vec<TargetWeight>,
    pub per_device_batch: u32,
    pub grad_accum: u32,
    pub epochs: u32,
    #[serde(serialize_with = "lr_to_string", deserialize_with = "lr_from_string")]
    pub learning_rate: f64,
    pub dataset_paths: Vec<String>,
}

pub fn default_paper_config() -> TrainConfig {
    TrainConfig {
        base_model: "vicuna-7b-16k-v1.5".into(),
        context_tokens: 16_384,
        lora_rank: 64,
        lora_alpha: 128,
        target_weights: vec![
            TargetWeight::Query,
            TargetWeight::Key,
            TargetWeight::Value,
            TargetWeight::Projection,
        ],
        per_device_batch: 2,
        grad_accum: 16,
        epochs: 4,
        learning_rate: 5e-5,
        dataset_paths: vec!["tp.jsonl".into(), "tqa.jsonl".into()],
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        default_paper_config()
    }
}

impl TrainConfig {
    pub fn effective_batch(&self) -> u32 {
        self.per_device_batch * self.grad_accum
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        let fail = |m: &str| Err(ManifestError::Invalid(m.to_string()));
        if self.base_model.trim().is_empty() {
            return fail("base_model is empty");
        }
        if self.context_tokens == 0 {
            return fail("context_tokens must be positive");
        }
        if self.lora_rank == 0 {
            return fail("lora_rank must be positive");
        }
        if self.lora_alpha == 0 {
            return fail("lora_alpha must be positive");
        }
        if self.per_device_batch == 0 || self.grad_accum == 0 || self.epochs == 0 {
            return fail("per_device_batch, grad_accum and epochs must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail("learning_rate must be a positive number");
        }
        if self.target_weights.is_empty() {
            return fail("target_weights is empty");
        }
        let unique: HashSet<_> = self.target_weights.iter().collect();
        if unique.len() != self.target_weights.len() {
            return fail("target_weights has duplicates");
        }
        Ok(())
    }
}

fn lr_to_string<S: Serializer>(lr: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{lr:e}"))
}

fn lr_from_string<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Lr {
        Text(String),
        Number(f64),
    }
    match Lr::deserialize(d)? {
        Lr::Text(t) => t.trim().parse().map_err(serde::de::Error::custom),
        Lr::Number(n) => Ok(n),
    }
}

/// Serialized manifest: sorted keys, two-space indent, trailing newline.
pub fn manifest_json(config: &TrainConfig) -> Result<String, ManifestError> {
    config.validate()?;
    let mut v = serde_json::to_value(config).expect("config serializes");
    v["schema_version"] = SCHEMA_VERSION.into();
    Ok(jsonl::to_pretty(&v))
}

pub fn write_manifest(config: &TrainConfig, path: &Path) -> Result<(), ManifestError> {
    let text = manifest_json(config)?;
    jsonl::write_atomic(path, &text).map_err(|e| ManifestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn parse_manifest(text: &str) -> Result<TrainConfig, ManifestError> {
    let mut v: serde_json::Value = serde_json::from_str(text).map_err(|e| parse_error("manifest", e))?;
    let version = v
        .as_object_mut()
        .and_then(|m| m.remove("schema_version"))
        .and_then(|n| n.as_u64())
        .unwrap_or(0) as u32;
    if version != SCHEMA_VERSION {
        return Err(ManifestError::Version(version));
    }
    let config: TrainConfig = serde_json::from_value(v).map_err(|e| parse_error("manifest", e))?;
    config.validate()?;
    Ok(config)
}

pub fn read_manifest(path: &Path) -> Result<TrainConfig, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|e| ManifestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_manifest(&text).map_err(|e| match e {
        ManifestError::Parse { message, .. } => ManifestError::Parse {
            path: path.display().to_string(),
            message,
        },
        other => other,
    })
}

fn parse_error(path: &str, e: serde_json::Error) -> ManifestError {
    ManifestError::Parse {
        path: path.to_string(),
        message: e.to_string(),
    }
}
