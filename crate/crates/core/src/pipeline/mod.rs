//! Run execution: documents through processing blocks, per-document results,
//! integrated summaries, run statistics, and persistence.

mod result_file;
mod run;

pub use result_file::{parse_result, render_result, ResultFileError, SCHEMA_VERSION};
pub use run::{
    execute_run, run_block, write_result, PipelineError, RunOptions, RESULT_ID_PREFIX,
    RUN_STATS_FILE, RUN_STATS_ID,
};

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::model::category::Category;
use crate::model::mention::EntityMention;
use crate::model::registry::ModelId;

/// Outcome of running one model over one document. A failed run carries the
/// error text and no entities.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRunResult {
    pub model_id: ModelId,
    pub exec_time_s: f64,
    pub entities: Vec<EntityMention>,
    pub error: Option<String>,
    /// Remote spans dropped because they failed validation against the text.
    pub dropped_spans: u64,
}

impl ModelRunResult {
    /// A failure outcome: the error recorded, no entities.
    pub fn failed(model_id: &str, exec_time_s: f64, error: String) -> Self {
        ModelRunResult {
            model_id: model_id.to_string(),
            exec_time_s,
            entities: Vec::new(),
            error: Some(error),
            dropped_spans: 0,
        }
    }
}

/// One surface form within a category: how often it was found and by whom.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub surface: String,
    pub count: u64,
    pub models: BTreeSet<ModelId>,
}

/// Cross-model aggregation of every entity found in one document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IntegratedSummary {
    /// Per category, entries sorted by descending count then surface.
    pub categories: BTreeMap<Category, Vec<SummaryEntry>>,
    /// Per model, per category, number of entities.
    pub totals: BTreeMap<ModelId, BTreeMap<Category, u64>>,
    pub grand_total: u64,
}

/// Everything recorded about one processed document.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentResult {
    pub doc_id: String,
    pub source_uri: String,
    pub settings_fingerprint: String,
    pub created_at: DateTime<Utc>,
    pub model_results: Vec<ModelRunResult>,
    pub summary: IntegratedSummary,
}

/// Per-model accumulation over a whole run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelStats {
    pub documents: u64,
    pub total_exec_time_s: f64,
    pub entities: BTreeMap<Category, u64>,
    pub failures: u64,
}

impl ModelStats {
    pub fn total_entities(&self) -> u64 {
        self.entities.values().sum()
    }
}

/// Run-wide statistics, keyed by model id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunStatistics {
    pub models: BTreeMap<ModelId, ModelStats>,
}

/// Groups mentions by (category, exact surface): no case folding, no merging
/// across categories. Entries are sorted by descending count, then surface.
pub fn build_summary(model_results: &[ModelRunResult]) -> IntegratedSummary {
    let mut groups: BTreeMap<Category, BTreeMap<String, SummaryEntry>> = BTreeMap::new();
    let mut totals: BTreeMap<ModelId, BTreeMap<Category, u64>> = BTreeMap::new();
    let mut grand_total = 0u64;
    for result in model_results {
        for mention in &result.entities {
            let entry = groups
                .entry(mention.category)
                .or_default()
                .entry(mention.surface.clone())
                .or_insert_with(|| SummaryEntry {
                    surface: mention.surface.clone(),
                    count: 0,
                    models: BTreeSet::new(),
                });
            entry.count += 1;
            entry.models.insert(mention.model_id.clone());
            *totals
                .entry(mention.model_id.clone())
                .or_default()
                .entry(mention.category)
                .or_default() += 1;
            grand_total += 1;
        }
    }
    let categories = groups
        .into_iter()
        .map(|(category, by_surface)| {
            let mut entries: Vec<SummaryEntry> = by_surface.into_values().collect();
            entries.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.surface.cmp(&b.surface)));
            (category, entries)
        })
        .collect();
    IntegratedSummary {
        categories,
        totals,
        grand_total,
    }
}

/// Folds one document's results into the statistics. Addition only, so fold
/// order over documents cannot change the totals.
pub fn accumulate_stats(stats: &mut RunStatistics, result: &DocumentResult) {
    for model_result in &result.model_results {
        let entry = stats.models.entry(model_result.model_id.clone()).or_default();
        entry.documents += 1;
        entry.total_exec_time_s += model_result.exec_time_s;
        if model_result.error.is_some() {
            entry.failures += 1;
        }
        for mention in &model_result.entities {
            *entry.entities.entry(mention.category).or_default() += 1;
        }
    }
}

/// Merges per-worker partial statistics into one.
pub fn merge_stats(into: &mut RunStatistics, from: RunStatistics) {
    for (model_id, partial) in from.models {
        let entry = into.models.entry(model_id).or_default();
        entry.documents += partial.documents;
        entry.total_exec_time_s += partial.total_exec_time_s;
        entry.failures += partial.failures;
        for (category, count) in partial.entities {
            *entry.entities.entry(category).or_default() += count;
        }
    }
}
