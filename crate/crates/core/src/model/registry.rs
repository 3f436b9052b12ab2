//! Model registry: descriptors for every backend the pipeline can run.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::category::AliasMap;

/// Identifier of a backend, in `tool/model` form (for example
/// `spacy/en_core_web_sm` or `native/patterns`).
pub type ModelId = String;

/// Where a backend runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Served by an adapter process over HTTP.
    External,
    /// Implemented in this crate; no network involved.
    Native,
}

/// Static description of one backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub model_id: ModelId,
    pub kind: ModelKind,
    /// Base URL of the adapter serving this model. Required when the model
    /// is external and enabled; meaningless for native models.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Disabled models are listed but rejected by run validation.
    pub enabled: bool,
    /// Raw-label aliases consulted before the default table.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub alias_map: AliasMap,
}

impl ModelDescriptor {
    pub(crate) fn external(model_id: &str) -> Self {
        ModelDescriptor {
            model_id: model_id.to_string(),
            kind: ModelKind::External,
            endpoint: None,
            enabled: false,
            alias_map: AliasMap::new(),
        }
    }

    pub(crate) fn native(model_id: &str) -> Self {
        ModelDescriptor {
            model_id: model_id.to_string(),
            kind: ModelKind::Native,
            endpoint: None,
            enabled: true,
            alias_map: AliasMap::new(),
        }
    }
}

/// Per-model override as read from a registry overrides file. Fields left
/// out keep the built-in value.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverride {
    pub enabled: Option<bool>,
    pub endpoint: Option<String>,
    pub alias_map: Option<AliasMap>,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("unknown model id: {0:?}")]
    UnknownModel(String),
    #[error("model {model_id:?} is external and enabled but has no endpoint")]
    MissingEndpoint { model_id: String },
    #[error("model {model_id:?} endpoint {endpoint:?} is not an http(s) URL")]
    BadEndpoint { model_id: String, endpoint: String },
    #[error("duplicate model id: {0:?}")]
    DuplicateModel(String),
    #[error("failed to read overrides file {path:?}: {source}")]
    OverridesIo {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse overrides file {path:?}: {source}")]
    OverridesParse {
        path: std::path::PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// The set of models the pipeline knows about, keyed by model id.
#[derive(Debug, Clone)]
pub struct Registry {
    models: BTreeMap<ModelId, ModelDescriptor>,
}

/// External tool/model pairs shipped in the built-in registry.
const EXTERNAL_MODEL_IDS: [&str; 21] = [
    "nltk/default",
    "spacy/en_core_web_sm",
    "spacy/en_core_web_md",
    "spacy/en_core_web_lg",
    "stanford/3-class",
    "stanford/4-class",
    "stanford/7-class",
    "stanza/default",
    "flair/ner",
    "flair/ner-fast",
    "flair/ner-pooled",
    "flair/ner-ontonotes",
    "flair/ner-ontonotes-fast",
    "allennlp/elmo-ner",
    "allennlp/fine-grained-ner",
    "polyglot/default",
    "deeppavlov/ner_conll2003",
    "deeppavlov/ner_ontonotes",
    "deeppavlov/ner_conll2003_bert",
    "deeppavlov/ner_ontonotes_bert",
    "bert/ner",
];

/// Native recognizer ids shipped in the built-in registry.
pub const NATIVE_PATTERNS: &str = "native/patterns";
pub const NATIVE_GAZETTEER: &str = "native/gazetteer";
pub const NATIVE_COMBINED: &str = "native/combined";

/// Native backend that replays preloaded annotations. Not part of the
/// built-in registry; evaluation registers it explicitly.
pub const NATIVE_GOLD_ORACLE: &str = "native/gold-oracle";

impl Registry {
    /// The built-in registry: every supported external model (disabled, no
    /// endpoint) plus the native recognizers (enabled).
    pub fn builtin() -> Self {
        let mut models = BTreeMap::new();
        for id in EXTERNAL_MODEL_IDS {
            models.insert(id.to_string(), ModelDescriptor::external(id));
        }
        for id in [NATIVE_PATTERNS, NATIVE_GAZETTEER, NATIVE_COMBINED] {
            models.insert(id.to_string(), ModelDescriptor::native(id));
        }
        Registry { models }
    }

    pub fn get(&self, model_id: &str) -> Option<&ModelDescriptor> {
        self.models.get(model_id)
    }

    pub fn contains(&self, model_id: &str) -> bool {
        self.models.contains_key(model_id)
    }

    /// All descriptors in model-id order.
    pub fn iter(&self) -> impl Iterator<Item = &ModelDescriptor> {
        self.models.values()
    }

    /// All model ids in order.
    pub fn model_ids(&self) -> Vec<ModelId> {
        self.models.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Adds a descriptor for a model the built-in set does not know, such as
    /// an evaluation oracle. The id must be new.
    pub fn register(&mut self, descriptor: ModelDescriptor) -> Result<(), RegistryError> {
        validate_descriptor(&descriptor)?;
        if self.models.contains_key(&descriptor.model_id) {
            return Err(RegistryError::DuplicateModel(descriptor.model_id));
        }
        self.models.insert(descriptor.model_id.clone(), descriptor);
        Ok(())
    }

    /// Applies per-model overrides. Every key must name a registered model,
    /// and the resulting descriptor must validate.
    pub fn apply_overrides(
        &mut self,
        overrides: &BTreeMap<String, ModelOverride>,
    ) -> Result<(), RegistryError> {
        for (model_id, patch) in overrides {
            let descriptor = self
                .models
                .get_mut(model_id)
                .ok_or_else(|| RegistryError::UnknownModel(model_id.clone()))?;
            if let Some(enabled) = patch.enabled {
                descriptor.enabled = enabled;
            }
            if let Some(endpoint) = &patch.endpoint {
                descriptor.endpoint = Some(endpoint.clone());
            }
            if let Some(alias_map) = &patch.alias_map {
                descriptor.alias_map = alias_map.clone();
            }
        }
        for descriptor in self.models.values() {
            validate_descriptor(descriptor)?;
        }
        Ok(())
    }

    /// Reads a JSON overrides file (a map from model id to override) and
    /// applies it.
    pub fn apply_overrides_file(&mut self, path: &Path) -> Result<(), RegistryError> {
        let raw = std::fs::read_to_string(path).map_err(|source| RegistryError::OverridesIo {
            path: path.to_path_buf(),
            source,
        })?;
        let overrides: BTreeMap<String, ModelOverride> =
            serde_json::from_str(&raw).map_err(|source| RegistryError::OverridesParse {
                path: path.to_path_buf(),
                source,
            })?;
        self.apply_overrides(&overrides)
    }
}

impl fmt::Display for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for descriptor in self.models.values() {
            writeln!(
                f,
                "{}\t{}\t{}",
                descriptor.model_id,
                match descriptor.kind {
                    ModelKind::External => "external",
                    ModelKind::Native => "native",
                },
                if descriptor.enabled { "enabled" } else { "disabled" }
            )?;
        }
        Ok(())
    }
}

/// Checks descriptor consistency: an enabled external model needs an
/// endpoint, and any endpoint present must be an http(s) URL.
pub fn validate_descriptor(descriptor: &ModelDescriptor) -> Result<(), RegistryError> {
    if descriptor.kind == ModelKind::External && descriptor.enabled && descriptor.endpoint.is_none()
    {
        return Err(RegistryError::MissingEndpoint {
            model_id: descriptor.model_id.clone(),
        });
    }
    if let Some(endpoint) = &descriptor.endpoint {
        let ok = url::Url::parse(endpoint)
            .map(|u| matches!(u.scheme(), "http" | "https"))
            .unwrap_or(false);
        if !ok {
            return Err(RegistryError::BadEndpoint {
                model_id: descriptor.model_id.clone(),
                endpoint: endpoint.clone(),
            });
        }
    }
    Ok(())
}
