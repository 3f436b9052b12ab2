//! Run configuration: input/output selection, processing blocks, context
//! policy, and the settings fingerprint.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::store::StoreConnection;
use crate::model::registry::{ModelId, Registry};

/// Accepted on-disk layouts for file input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    /// Plain UTF-8 text files.
    Text,
    /// Structured extracted-content records (JSON objects).
    Extracted,
}

/// Where documents come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSource {
    /// Individual files or directories to scan recursively.
    Files {
        paths: Vec<PathBuf>,
        format: InputFormat,
    },
    /// Every document in a store database.
    Store { connection: StoreConnection },
}

/// Where results go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputSink {
    /// One result file per document under this directory.
    Directory { path: PathBuf },
    /// One store document per result.
    Store { connection: StoreConnection },
}

/// How much surrounding text each mention carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContextPolicy {
    /// The sentence(s) overlapping the mention.
    Sentence,
    /// A fixed window of `chars` scalars on each side of the mention.
    Window { chars: usize },
}

/// An ordered group of models to run, in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessingBlock {
    pub block_id: String,
    pub models: Vec<ModelId>,
}

/// Full configuration for one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub input: InputSource,
    pub blocks: Vec<ProcessingBlock>,
    pub output: OutputSink,
    pub context_policy: ContextPolicy,
    #[serde(default)]
    pub strict_labels: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SettingsError {
    #[error("settings declare no processing blocks")]
    NoBlocks,
    #[error("block {block_id:?} lists no models")]
    EmptyBlock { block_id: String },
    #[error("block {block_id:?} lists model {model_id:?} twice")]
    DuplicateModelInBlock { block_id: String, model_id: String },
    #[error("block {block_id:?} references unknown model {model_id:?}")]
    UnknownModel { block_id: String, model_id: String },
    #[error("block {block_id:?} references disabled model {model_id:?}")]
    DisabledModel { block_id: String, model_id: String },
    #[error("context window must cover at least one character")]
    ZeroWindow,
    #[error("input lists no paths")]
    NoInputPaths,
}

impl RunSettings {
    /// Checks structural invariants and block/model resolution against the
    /// registry.
    pub fn validate(&self, registry: &Registry) -> Result<(), SettingsError> {
        if self.blocks.is_empty() {
            return Err(SettingsError::NoBlocks);
        }
        for block in &self.blocks {
            if block.models.is_empty() {
                return Err(SettingsError::EmptyBlock {
                    block_id: block.block_id.clone(),
                });
            }
            let mut seen = BTreeSet::new();
            for model_id in &block.models {
                if !seen.insert(model_id) {
                    return Err(SettingsError::DuplicateModelInBlock {
                        block_id: block.block_id.clone(),
                        model_id: model_id.clone(),
                    });
                }
                match registry.get(model_id) {
                    None => {
                        return Err(SettingsError::UnknownModel {
                            block_id: block.block_id.clone(),
                            model_id: model_id.clone(),
                        })
                    }
                    Some(descriptor) if !descriptor.enabled => {
                        return Err(SettingsError::DisabledModel {
                            block_id: block.block_id.clone(),
                            model_id: model_id.clone(),
                        })
                    }
                    Some(_) => {}
                }
            }
        }
        if let ContextPolicy::Window { chars: 0 } = self.context_policy {
            return Err(SettingsError::ZeroWindow);
        }
        if let InputSource::Files { paths, .. } = &self.input {
            if paths.is_empty() {
                return Err(SettingsError::NoInputPaths);
            }
        }
        Ok(())
    }

    /// Every model id referenced by any block, in first-use order without
    /// duplicates.
    pub fn referenced_models(&self) -> Vec<ModelId> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for block in &self.blocks {
            for model_id in &block.models {
                if seen.insert(model_id.clone()) {
                    out.push(model_id.clone());
                }
            }
        }
        out
    }
}

/// Re-serializes a JSON value with object keys sorted at every level, so the
/// fingerprint does not depend on serialization order.
fn canonical_json(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_unstable();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", serde_json::to_string(k).unwrap(), canonical_json(&map[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        serde_json::Value::Array(items) => {
            let body: Vec<String> = items.iter().map(canonical_json).collect();
            format!("[{}]", body.join(","))
        }
        other => other.to_string(),
    }
}

/// Deterministic hex content hash of the settings. Sensitive to block order
/// and to model order within a block.
pub fn fingerprint_settings(settings: &RunSettings) -> String {
    let value = serde_json::to_value(settings).expect("settings serialize to JSON");
    let canonical = canonical_json(&value);
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
