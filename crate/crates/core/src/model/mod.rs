//! Shared domain types: categories, mentions, model descriptors, and run
//! settings.

pub mod category;
pub mod mention;
pub mod registry;
pub mod settings;

pub use category::{normalize_category, AliasMap, Category, UnknownLabel};
pub use mention::{scalar_len, scalar_slice, validate_mention, EntityMention, MentionError};
pub use registry::{ModelDescriptor, ModelId, ModelKind, ModelOverride, Registry, RegistryError};
pub use settings::{
    fingerprint_settings, ContextPolicy, InputFormat, InputSource, OutputSink, ProcessingBlock,
    RunSettings, SettingsError,
};
