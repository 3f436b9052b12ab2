//! Native deterministic NER backends: pattern grammars for numeric and
//! temporal categories, gazetteer matching for name categories.

pub mod gazetteer;
pub mod lexicon;
mod numeric;
mod temporal;

pub use gazetteer::{gazetteer_annotate, Gazetteer, GazetteerError};
pub use lexicon::{default_lexicon, Lexicon, LexiconError};
pub use numeric::{recognize_numeric, recognize_numeric_with};
pub use temporal::recognize_temporal;

use std::collections::BTreeMap;
use std::time::Instant;

use thiserror::Error;

use crate::ingest::DocumentRecord;
use crate::model::category::Category;
use crate::model::mention::EntityMention;
use crate::model::registry::{
    NATIVE_COMBINED, NATIVE_GAZETTEER, NATIVE_GOLD_ORACLE, NATIVE_PATTERNS,
};
use crate::model::settings::ContextPolicy;
use crate::pipeline::ModelRunResult;
use crate::textkit::ContextBuilder;

/// An entity span straight out of a recognizer, before context attachment.
/// Native recognizers emit score 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMention {
    pub surface: String,
    pub category: Category,
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

/// Loaded resources the native backends draw on.
#[derive(Debug, Clone, Default)]
pub struct NativeResources {
    pub gazetteers: Vec<Gazetteer>,
    /// Preloaded annotations replayed verbatim by the gold-oracle backend,
    /// keyed by doc_id. Spans must be valid against the document text.
    pub replay: BTreeMap<String, Vec<RawMention>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecognizerError {
    #[error("unknown native model: {0:?}")]
    UnknownModel(String),
    #[error("model {model_id:?} requires a loaded {resource}")]
    MissingResource { model_id: String, resource: String },
}

/// Resolution order when two pattern mentions collide: percent beats money
/// beats quantity beats the temporal categories beats ordinal beats
/// cardinal; name categories rank after all of those in declaration order.
pub(crate) fn pattern_precedence(category: Category) -> usize {
    match category {
        Category::Percent => 0,
        Category::Money => 1,
        Category::Quantity => 2,
        Category::Date => 3,
        Category::Time => 4,
        Category::Ordinal => 5,
        Category::Cardinal => 6,
        other => {
            10 + Category::ALL
                .iter()
                .position(|c| *c == other)
                .expect("every category is in ALL")
        }
    }
}

/// Keeps a maximal set of non-overlapping candidates: longer spans win,
/// then earlier start, then pattern precedence, then category name. The
/// result is sorted by start.
pub(crate) fn resolve_overlaps(
    chars: &[char],
    mut candidates: Vec<(usize, usize, Category)>,
) -> Vec<RawMention> {
    candidates.sort_by(|a, b| {
        (b.1 - b.0)
            .cmp(&(a.1 - a.0))
            .then_with(|| a.0.cmp(&b.0))
            .then_with(|| pattern_precedence(a.2).cmp(&pattern_precedence(b.2)))
            .then_with(|| a.2.as_str().cmp(b.2.as_str()))
    });
    candidates.dedup();
    let mut kept: Vec<(usize, usize, Category)> = Vec::new();
    for candidate in candidates {
        let overlaps = kept
            .iter()
            .any(|k| candidate.0 < k.1 && k.0 < candidate.1);
        if !overlaps {
            kept.push(candidate);
        }
    }
    kept.sort_by_key(|c| c.0);
    kept.into_iter()
        .map(|(start, end, category)| RawMention {
            surface: chars[start..end].iter().collect(),
            category,
            start,
            end,
            score: 1.0,
        })
        .collect()
}

/// Runs one native backend over a document: dispatches to the recognizers
/// behind `model_id`, merges their output (longer span wins, then earlier
/// start, then pattern precedence), and attaches context.
pub fn run_native_backend(
    model_id: &str,
    doc: &DocumentRecord,
    resources: &NativeResources,
    policy: ContextPolicy,
) -> Result<ModelRunResult, RecognizerError> {
    let started = Instant::now();
    let wants_patterns = matches!(model_id, NATIVE_PATTERNS | NATIVE_COMBINED);
    let wants_gazetteers = matches!(model_id, NATIVE_GAZETTEER | NATIVE_COMBINED);
    let replays = model_id == NATIVE_GOLD_ORACLE;
    if !wants_patterns && !wants_gazetteers && !replays {
        return Err(RecognizerError::UnknownModel(model_id.to_string()));
    }
    if wants_gazetteers && resources.gazetteers.is_empty() {
        return Err(RecognizerError::MissingResource {
            model_id: model_id.to_string(),
            resource: "gazetteer".to_string(),
        });
    }

    let merged = if replays {
        // Replay emits exactly what was preloaded for this document,
        // ordered by position; no overlap resolution applies.
        let mut mentions = resources
            .replay
            .get(&doc.doc_id)
            .cloned()
            .unwrap_or_default();
        mentions.sort_by_key(|m| (m.start, m.end));
        mentions
    } else {
        let mut raw: Vec<RawMention> = Vec::new();
        if wants_patterns {
            raw.extend(recognize_numeric(&doc.text));
            raw.extend(recognize_temporal(&doc.text));
        }
        if wants_gazetteers {
            for gazetteer in &resources.gazetteers {
                raw.extend(gazetteer_annotate(&doc.text, gazetteer));
            }
        }
        let chars: Vec<char> = doc.text.chars().collect();
        resolve_overlaps(
            &chars,
            raw.into_iter().map(|m| (m.start, m.end, m.category)).collect(),
        )
    };
    let builder = ContextBuilder::new(&doc.text, policy);
    let entities = merged
        .into_iter()
        .map(|m| {
            let context = builder
                .context(m.start, m.end)
                .expect("recognizer spans are within the text");
            EntityMention {
                surface: m.surface,
                category: m.category,
                start: m.start,
                end: m.end,
                context,
                score: Some(m.score),
                model_id: model_id.to_string(),
            }
        })
        .collect();
    Ok(ModelRunResult {
        model_id: model_id.to_string(),
        exec_time_s: started.elapsed().as_secs_f64(),
        entities,
        error: None,
        dropped_spans: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{content_hash, DocumentRecord};
    use crate::model::mention::validate_mention;
    use std::collections::BTreeMap;

    fn doc(text: &str) -> DocumentRecord {
        DocumentRecord {
            doc_id: "t".to_string(),
            source_uri: "t".to_string(),
            text: text.to_string(),
            metadata: BTreeMap::new(),
            content_hash: content_hash(text),
        }
    }

    fn demo_gazetteer() -> Gazetteer {
        Gazetteer::parse(
            "demo",
            "Canberra\tGPE\nNew York\tGPE\nNew York Times\tORG\n",
            false,
        )
        .unwrap()
    }

    #[test]
    fn patterns_backend_finds_money_and_date() {
        let document = doc("Pay $5 on 12 March 2021");
        let result = run_native_backend(
            NATIVE_PATTERNS,
            &document,
            &NativeResources::default(),
            ContextPolicy::Sentence,
        )
        .unwrap();
        assert!(result.error.is_none());
        let found: Vec<(&str, Category)> = result
            .entities
            .iter()
            .map(|e| (e.surface.as_str(), e.category))
            .collect();
        assert!(found.contains(&("$5", Category::Money)));
        assert!(found.contains(&("12 March 2021", Category::Date)));
        for entity in &result.entities {
            assert_eq!(entity.context, document.text);
            assert_eq!(entity.score, Some(1.0));
            assert_eq!(entity.model_id, NATIVE_PATTERNS);
            validate_mention(entity, &document.text).unwrap();
        }
        assert!(result.exec_time_s >= 0.0);
    }

    #[test]
    fn gazetteer_backend_requires_resources() {
        let err = run_native_backend(
            NATIVE_GAZETTEER,
            &doc("Canberra"),
            &NativeResources::default(),
            ContextPolicy::Sentence,
        )
        .unwrap_err();
        assert!(matches!(err, RecognizerError::MissingResource { .. }));

        let err = run_native_backend(
            NATIVE_COMBINED,
            &doc("Canberra"),
            &NativeResources::default(),
            ContextPolicy::Sentence,
        )
        .unwrap_err();
        assert!(matches!(err, RecognizerError::MissingResource { .. }));
    }

    #[test]
    fn unknown_native_model_rejected() {
        let err = run_native_backend(
            "native/unknown",
            &doc("x"),
            &NativeResources::default(),
            ContextPolicy::Sentence,
        )
        .unwrap_err();
        assert_eq!(err, RecognizerError::UnknownModel("native/unknown".to_string()));
    }

    #[test]
    fn empty_document_yields_zero_entities() {
        let result = run_native_backend(
            NATIVE_PATTERNS,
            &doc(""),
            &NativeResources::default(),
            ContextPolicy::Sentence,
        )
        .unwrap();
        assert!(result.entities.is_empty());
        assert!(result.exec_time_s >= 0.0);
        assert!(result.error.is_none());
    }

    #[test]
    fn combined_backend_merges_grammars_and_gazetteers() {
        let resources = NativeResources {
            gazetteers: vec![demo_gazetteer()],
            ..NativeResources::default()
        };
        let document = doc("Canberra spent $9 during 2021.");
        let result = run_native_backend(
            NATIVE_COMBINED,
            &document,
            &resources,
            ContextPolicy::Sentence,
        )
        .unwrap();
        let found: Vec<(&str, Category)> = result
            .entities
            .iter()
            .map(|e| (e.surface.as_str(), e.category))
            .collect();
        assert!(found.contains(&("Canberra", Category::Gpe)));
        assert!(found.contains(&("$9", Category::Money)));
        assert!(found.contains(&("2021", Category::Date)));
    }

    #[test]
    fn backend_output_never_overlaps() {
        let resources = NativeResources {
            gazetteers: vec![demo_gazetteer()],
            ..NativeResources::default()
        };
        let document = doc("the New York Times wrote about New York on 12/03/2021 at 10:30");
        let result = run_native_backend(
            NATIVE_COMBINED,
            &document,
            &resources,
            ContextPolicy::Sentence,
        )
        .unwrap();
        let mut spans: Vec<(usize, usize)> =
            result.entities.iter().map(|e| (e.start, e.end)).collect();
        spans.sort_unstable();
        for pair in spans.windows(2) {
            assert!(pair[0].1 <= pair[1].0, "overlap: {spans:?}");
        }
        let surfaces: Vec<&str> = result.entities.iter().map(|e| e.surface.as_str()).collect();
        assert!(surfaces.contains(&"New York Times"));
        assert!(surfaces.contains(&"New York"));
    }

    #[test]
    fn determinism_across_runs() {
        let resources = NativeResources {
            gazetteers: vec![demo_gazetteer()],
            ..NativeResources::default()
        };
        let document = doc("Pay $5 to New York Times on 12 March 2021; 10 km away, 5% fee.");
        let a = run_native_backend(NATIVE_COMBINED, &document, &resources, ContextPolicy::Sentence)
            .unwrap();
        let b = run_native_backend(NATIVE_COMBINED, &document, &resources, ContextPolicy::Sentence)
            .unwrap();
        assert_eq!(a.entities, b.entities);
    }

    #[test]
    fn equal_span_collision_resolved_by_precedence() {
        let chars: Vec<char> = "2021".chars().collect();
        let resolved = resolve_overlaps(
            &chars,
            vec![(0, 4, Category::Cardinal), (0, 4, Category::Date)],
        );
        assert_eq!(resolved.len(), 1);
        assert_eq!(resolved[0].category, Category::Date);
    }

    #[test]
    fn longer_span_beats_precedence() {
        let chars: Vec<char> = "12 March 2021".chars().collect();
        let resolved = resolve_overlaps(
            &chars,
            vec![
                (0, 2, Category::Cardinal),
                (9, 13, Category::Cardinal),
                (0, 13, Category::Date),
            ],
        );
        assert_eq!(resolved.len(), 1);
        assert_eq!(resolved[0].surface, "12 March 2021");
    }
}
