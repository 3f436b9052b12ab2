//! Named-entity recognition toolkit: configurable blocks of NER backends,
//! offset-faithful mention extraction, cross-model summaries, and result
//! persistence to files or a document store.

pub mod adapters;
pub mod api;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod recognizers;
pub mod textkit;

pub use ingest::{DocumentRecord, IngestError};
pub use model::{
    fingerprint_settings, normalize_category, validate_mention, AliasMap, Category, ContextPolicy,
    EntityMention, InputFormat, InputSource, MentionError, ModelDescriptor, ModelId, ModelKind,
    OutputSink, ProcessingBlock, Registry, RegistryError, RunSettings, SettingsError, UnknownLabel,
};
