//! The persisted result document: rendering to and parsing from the stable
//! JSON schema (schema_version "1").

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::category::Category;
use crate::model::mention::EntityMention;
use crate::pipeline::{DocumentResult, IntegratedSummary, ModelRunResult};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum ResultFileError {
    #[error("malformed result document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported result schema version {found:?} (expected {SCHEMA_VERSION:?})")]
    UnsupportedVersion { found: String },
}

/// Entity as persisted: no model_id (the enclosing model block carries it).
#[derive(Debug, Serialize, Deserialize)]
struct EntityFile {
    surface: String,
    category: Category,
    start: usize,
    end: usize,
    context: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    score: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    model_id: String,
    exec_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    error: Option<String>,
    #[serde(skip_serializing_if = "is_zero", default)]
    dropped_spans: u64,
    entities: Vec<EntityFile>,
}

fn is_zero(n: &u64) -> bool {
    *n == 0
}

#[derive(Debug, Serialize, Deserialize)]
struct ResultFile {
    schema_version: String,
    doc_id: String,
    source_uri: String,
    settings_fingerprint: String,
    created_at: DateTime<Utc>,
    models: Vec<ModelFile>,
    summary: IntegratedSummary,
}

/// Renders a result to its canonical on-disk form: pretty-printed JSON with a
/// trailing newline. Map keys are ordered, so equal results render to equal
/// bytes.
pub fn render_result(result: &DocumentResult) -> String {
    let file = ResultFile {
        schema_version: SCHEMA_VERSION.to_string(),
        doc_id: result.doc_id.clone(),
        source_uri: result.source_uri.clone(),
        settings_fingerprint: result.settings_fingerprint.clone(),
        created_at: result.created_at,
        models: result
            .model_results
            .iter()
            .map(|r| ModelFile {
                model_id: r.model_id.clone(),
                exec_time_s: r.exec_time_s,
                error: r.error.clone(),
                dropped_spans: r.dropped_spans,
                entities: r
                    .entities
                    .iter()
                    .map(|m| EntityFile {
                        surface: m.surface.clone(),
                        category: m.category,
                        start: m.start,
                        end: m.end,
                        context: m.context.clone(),
                        score: m.score,
                    })
                    .collect(),
            })
            .collect(),
        summary: result.summary.clone(),
    };
    let mut rendered = serde_json::to_string_pretty(&file).expect("result serialization");
    rendered.push('\n');
    rendered
}

/// Parses a rendered result document. Each entity's model_id is restored from
/// its enclosing model block.
pub fn parse_result(content: &str) -> Result<DocumentResult, ResultFileError> {
    let file: ResultFile = serde_json::from_str(content)?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(ResultFileError::UnsupportedVersion {
            found: file.schema_version,
        });
    }
    Ok(DocumentResult {
        doc_id: file.doc_id,
        source_uri: file.source_uri,
        settings_fingerprint: file.settings_fingerprint,
        created_at: file.created_at,
        model_results: file
            .models
            .into_iter()
            .map(|m| ModelRunResult {
                entities: m
                    .entities
                    .into_iter()
                    .map(|e| EntityMention {
                        surface: e.surface,
                        category: e.category,
                        start: e.start,
                        end: e.end,
                        context: e.context,
                        score: e.score,
                        model_id: m.model_id.clone(),
                    })
                    .collect(),
                model_id: m.model_id,
                exec_time_s: m.exec_time_s,
                error: m.error,
                dropped_spans: m.dropped_spans,
            })
            .collect(),
        summary: file.summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::build_summary;

    fn sample() -> DocumentResult {
        let entities = vec![
            EntityMention {
                surface: "Canberra".to_string(),
                category: Category::Gpe,
                start: 0,
                end: 8,
                context: "Canberra is cold".to_string(),
                score: Some(1.0),
                model_id: "native/gazetteer".to_string(),
            },
            EntityMention {
                surface: "2021".to_string(),
                category: Category::Date,
                start: 12,
                end: 16,
                context: "cold in 2021".to_string(),
                score: None,
                model_id: "native/gazetteer".to_string(),
            },
        ];
        let model_results = vec![
            ModelRunResult {
                model_id: "native/gazetteer".to_string(),
                exec_time_s: 0.012,
                entities,
                error: None,
                dropped_spans: 0,
            },
            ModelRunResult::failed("spacy/en_core_web_sm", 1.5, "endpoint down".to_string()),
        ];
        let summary = build_summary(&model_results);
        DocumentResult {
            doc_id: "docs:a.txt".to_string(),
            source_uri: "/in/docs/a.txt".to_string(),
            settings_fingerprint: "f".repeat(64),
            created_at: "2021-03-12T09:30:00Z".parse().unwrap(),
            model_results,
            summary,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let result = sample();
        let rendered = render_result(&result);
        let parsed = parse_result(&rendered).unwrap();
        assert_eq!(parsed, result);
        // And rendering again is byte-identical.
        assert_eq!(render_result(&parsed), rendered);
    }

    #[test]
    fn file_shape_matches_schema() {
        let rendered = render_result(&sample());
        let value: serde_json::Value = serde_json::from_str(&rendered).unwrap();
        assert_eq!(value["schema_version"], "1");
        assert_eq!(value["doc_id"], "docs:a.txt");
        assert_eq!(value["created_at"], "2021-03-12T09:30:00Z");
        let models = value["models"].as_array().unwrap();
        assert_eq!(models.len(), 2);
        let entity = &models[0]["entities"][0];
        assert_eq!(entity["surface"], "Canberra");
        assert_eq!(entity["category"], "GPE");
        assert_eq!(entity["start"], 0);
        assert_eq!(entity["end"], 8);
        // Entities never persist a model_id of their own.
        assert!(entity.get("model_id").is_none());
        // score appears only when present.
        assert_eq!(entity["score"], 1.0);
        assert!(models[0]["entities"][1].get("score").is_none());
        // error appears only on failures; fresh failures carry no entities.
        assert!(models[0].get("error").is_none());
        assert_eq!(models[1]["error"], "endpoint down");
        assert_eq!(models[1]["entities"].as_array().unwrap().len(), 0);
        // dropped_spans appears only when nonzero.
        assert!(models[0].get("dropped_spans").is_none());
        let summary = &value["summary"];
        assert_eq!(summary["grand_total"], 2);
        assert_eq!(summary["categories"]["GPE"][0]["surface"], "Canberra");
        assert_eq!(summary["categories"]["GPE"][0]["count"], 1);
        assert_eq!(
            summary["categories"]["GPE"][0]["models"][0],
            "native/gazetteer"
        );
        assert_eq!(summary["totals"]["native/gazetteer"]["GPE"], 1);
    }

    #[test]
    fn dropped_spans_persist_when_nonzero() {
        let mut result = sample();
        result.model_results[0].dropped_spans = 3;
        let rendered = render_result(&result);
        let value: serde_json::Value = serde_json::from_str(&rendered).unwrap();
        assert_eq!(value["models"][0]["dropped_spans"], 3);
        assert_eq!(parse_result(&rendered).unwrap().model_results[0].dropped_spans, 3);
    }

    #[test]
    fn model_id_restored_on_parse() {
        let parsed = parse_result(&render_result(&sample())).unwrap();
        for model_result in &parsed.model_results {
            for entity in &model_result.entities {
                assert_eq!(entity.model_id, model_result.model_id);
            }
        }
    }

    #[test]
    fn version_gate() {
        let mut value: serde_json::Value =
            serde_json::from_str(&render_result(&sample())).unwrap();
        value["schema_version"] = "2".into();
        let err = parse_result(&value.to_string()).unwrap_err();
        assert!(matches!(err, ResultFileError::UnsupportedVersion { found } if found == "2"));
        assert!(parse_result("{not json").is_err());
    }
}
