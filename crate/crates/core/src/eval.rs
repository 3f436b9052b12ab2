//! Evaluation harness: CoNLL-format corpus loading, gold-annotation
//! replay through the pipeline, exact-span precision/recall/F1, and
//! plain-text run reports.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::model::category::{normalize_category, AliasMap, Category};
use crate::model::mention::EntityMention;
use crate::model::registry::{ModelDescriptor, NATIVE_GOLD_ORACLE};
use crate::pipeline::RunStatistics;
use crate::recognizers::RawMention;

/// A gold-annotated span against a corpus document's reconstructed text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldMention {
    pub surface: String,
    pub category: Category,
    pub start: usize,
    pub end: usize,
}

/// One corpus document: reconstructed text plus its gold annotations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldDocument {
    pub doc_id: String,
    pub text: String,
    pub mentions: Vec<GoldMention>,
}

/// A loaded evaluation corpus.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GoldCorpus {
    pub documents: Vec<GoldDocument>,
    /// Source format tag, e.g. "conll2003".
    pub source_format: String,
}

#[derive(Debug, Error)]
pub enum ConllError {
    #[error("cannot read {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{corpus}:{line}: expected 4 whitespace-separated columns, got {found}: {text:?}")]
    ParseError {
        corpus: String,
        line: usize,
        found: usize,
        text: String,
    },
    #[error("{corpus}:{line}: tag {tag:?} does not continue a span")]
    BadTagSequence {
        corpus: String,
        line: usize,
        tag: String,
    },
    #[error("{corpus}:{line}: unknown entity label {label:?}")]
    UnknownLabel {
        corpus: String,
        line: usize,
        label: String,
    },
}

/// Loads a CoNLL-2003-format corpus: one token per line with columns
/// token/POS/chunk/NE, blank lines between sentences, "-DOCSTART-" lines
/// between documents. Strict mode rejects I- tags that do not continue a
/// same-category span and labels outside the known families; lenient mode
/// treats the former as span starts and maps the latter to MISCELLANEOUS.
pub fn load_conll(path: &Path, strict: bool) -> Result<GoldCorpus, ConllError> {
    let content = std::fs::read_to_string(path).map_err(|source| ConllError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let corpus_name = path
        .file_stem()
        .map(|stem| stem.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".to_string());
    parse_conll(&content, &corpus_name, strict)
}

/// The parsing core behind [`load_conll`]; `corpus_name` prefixes doc ids
/// and error locations.
pub fn parse_conll(content: &str, corpus_name: &str, strict: bool) -> Result<GoldCorpus, ConllError> {
    // Sentences buffered as (token, tag, line number) triples per document.
    let mut documents = Vec::new();
    let mut sentences: Vec<Vec<(String, String, usize)>> = Vec::new();
    let mut sentence: Vec<(String, String, usize)> = Vec::new();

    let flush_sentence = |sentences: &mut Vec<_>, sentence: &mut Vec<_>| {
        if !sentence.is_empty() {
            sentences.push(std::mem::take(sentence));
        }
    };

    for (index, line) in content.lines().enumerate() {
        let line_no = index + 1;
        let columns: Vec<&str> = line.split_whitespace().collect();
        if columns.is_empty() {
            flush_sentence(&mut sentences, &mut sentence);
            continue;
        }
        if columns[0] == "-DOCSTART-" {
            flush_sentence(&mut sentences, &mut sentence);
            if !sentences.is_empty() {
                documents.push(build_document(
                    corpus_name,
                    documents.len(),
                    std::mem::take(&mut sentences),
                    strict,
                )?);
            }
            continue;
        }
        if columns.len() != 4 {
            return Err(ConllError::ParseError {
                corpus: corpus_name.to_string(),
                line: line_no,
                found: columns.len(),
                text: line.to_string(),
            });
        }
        sentence.push((columns[0].to_string(), columns[3].to_string(), line_no));
    }
    flush_sentence(&mut sentences, &mut sentence);
    if !sentences.is_empty() {
        documents.push(build_document(
            corpus_name,
            documents.len(),
            sentences,
            strict,
        )?);
    }

    Ok(GoldCorpus {
        documents,
        source_format: "conll2003".to_string(),
    })
}

/// Reconstructs one document (tokens joined by single spaces, sentences by
/// newlines) and converts its IOB tag sequence to spans.
fn build_document(
    corpus_name: &str,
    ordinal: usize,
    sentences: Vec<Vec<(String, String, usize)>>,
    strict: bool,
) -> Result<GoldDocument, ConllError> {
    let aliases = AliasMap::new();
    let mut text = String::new();
    let mut offset = 0usize; // in Unicode scalar values
    let mut spans: Vec<(Category, usize, usize)> = Vec::new();
    let mut open: Option<(Category, usize, usize)> = None;

    for (sentence_index, sentence) in sentences.iter().enumerate() {
        if sentence_index > 0 {
            text.push('\n');
            offset += 1;
        }
        // Spans never cross sentence boundaries.
        if let Some(span) = open.take() {
            spans.push(span);
        }
        for (token_index, (token, tag, line_no)) in sentence.iter().enumerate() {
            if token_index > 0 {
                text.push(' ');
                offset += 1;
            }
            let token_start = offset;
            text.push_str(token);
            offset += token.chars().count();

            if tag == "O" {
                if let Some(span) = open.take() {
                    spans.push(span);
                }
                continue;
            }
            let (starts_span, label) = match tag.split_once('-') {
                Some(("B", label)) => (true, label),
                Some(("I", label)) => (false, label),
                // A bare label reads as a continuation tag; strict mode
                // rejects it below unless it genuinely continues a span.
                _ => (false, tag.as_str()),
            };
            let category = normalize_category(label, &aliases, strict).map_err(|_| {
                ConllError::UnknownLabel {
                    corpus: corpus_name.to_string(),
                    line: *line_no,
                    label: label.to_string(),
                }
            })?;
            let continues = !starts_span
                && open
                    .as_ref()
                    .is_some_and(|(c, _, end)| *c == category && *end == token_start - 1);
            if continues {
                let span = open.as_mut().expect("continuation has an open span");
                span.2 = offset;
                continue;
            }
            if !starts_span && strict {
                return Err(ConllError::BadTagSequence {
                    corpus: corpus_name.to_string(),
                    line: *line_no,
                    tag: tag.clone(),
                });
            }
            if let Some(span) = open.take() {
                spans.push(span);
            }
            open = Some((category, token_start, offset));
        }
    }
    if let Some(span) = open.take() {
        spans.push(span);
    }

    let chars: Vec<char> = text.chars().collect();
    let mentions = spans
        .into_iter()
        .map(|(category, start, end)| GoldMention {
            surface: chars[start..end].iter().collect(),
            category,
            start,
            end,
        })
        .collect();
    Ok(GoldDocument {
        doc_id: format!("{corpus_name}-{ordinal:04}"),
        text,
        mentions,
    })
}

/// Writes each corpus document as an extracted-content record
/// ({"id", "content"}) so a run can ingest the corpus through the standard
/// input path. Returns the written paths in document order.
pub fn write_extracted_corpus(corpus: &GoldCorpus, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(corpus.documents.len());
    for doc in &corpus.documents {
        let record = serde_json::json!({"id": doc.doc_id, "content": doc.text});
        let mut body = serde_json::to_string_pretty(&record).expect("record serializes");
        body.push('\n');
        let path = dir.join(format!("{}.json", doc.doc_id));
        std::fs::write(&path, body)?;
        paths.push(path);
    }
    Ok(paths)
}

/// A backend that replays the corpus's gold annotations: a descriptor to
/// register and the replay table to install in [`NativeResources`].
///
/// [`NativeResources`]: crate::recognizers::NativeResources
pub fn gold_oracle_backend(
    corpus: &GoldCorpus,
) -> (ModelDescriptor, BTreeMap<String, Vec<RawMention>>)
{
    let replay = corpus
        .documents
        .iter()
        .map(|doc| {
            let mentions = doc
                .mentions
                .iter()
                .map(|m| RawMention {
                    surface: m.surface.clone(),
                    category: m.category,
                    start: m.start,
                    end: m.end,
                    score: 1.0,
                })
                .collect();
            (doc.doc_id.clone(), mentions)
        })
        .collect();
    (ModelDescriptor::native(NATIVE_GOLD_ORACLE), replay)
}

/// What evaluation compares: exact (category, start, end) triples.
pub type SpanKey = (Category, usize, usize);

/// Projects extracted mentions to their comparison keys.
pub fn entity_keys(entities: &[EntityMention]) -> Vec<SpanKey> {
    entities
        .iter()
        .map(|m| (m.category, m.start, m.end))
        .collect()
}

impl GoldDocument {
    /// The document's gold annotations as comparison keys.
    pub fn keys(&self) -> Vec<SpanKey> {
        self.mentions
            .iter()
            .map(|m| (m.category, m.start, m.end))
            .collect()
    }
}

/// Precision/recall/F1 with their supporting counts.
///
/// Conventions: with no predictions (tp+fp = 0), precision is 1 when there
/// is also nothing to find (tp+fn = 0) and 0 otherwise; recall mirrors
/// that; F1 is 0 when precision + recall = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    fn from_counts(tp: u64, fp: u64, fn_count: u64) -> Metrics {
        let precision = if tp + fp == 0 {
            if tp + fn_count == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_count == 0 {
            if tp + fp == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            tp as f64 / (tp + fn_count) as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Metrics {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_count,
            precision,
            recall,
            f1,
        }
    }
}

/// Exact-match evaluation, per category and overall.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Categories with any support in predictions or gold.
    pub categories: BTreeMap<Category, Metrics>,
    pub overall: Metrics,
}

/// Evaluates one document's predictions against its gold annotations.
/// Duplicate keys collapse: matching is over sets of (category, start, end).
pub fn evaluate(pred: &[SpanKey], gold: &[SpanKey]) -> EvalReport {
    evaluate_documents([(pred, gold)])
}

/// Evaluates many documents, micro-averaged: counts accumulate across
/// documents first, metrics are computed from the sums.
pub fn evaluate_documents<'a, I>(pairs: I) -> EvalReport
where
    I: IntoIterator<Item = (&'a [SpanKey], &'a [SpanKey])>,
{
    let mut counts: BTreeMap<Category, (u64, u64, u64)> = BTreeMap::new();
    for (pred, gold) in pairs {
        let pred: BTreeSet<SpanKey> = pred.iter().copied().collect();
        let gold: BTreeSet<SpanKey> = gold.iter().copied().collect();
        for key in pred.intersection(&gold) {
            counts.entry(key.0).or_default().0 += 1;
        }
        for key in pred.difference(&gold) {
            counts.entry(key.0).or_default().1 += 1;
        }
        for key in gold.difference(&pred) {
            counts.entry(key.0).or_default().2 += 1;
        }
    }
    let (mut tp, mut fp, mut fn_count) = (0, 0, 0);
    let categories = counts
        .into_iter()
        .map(|(category, (c_tp, c_fp, c_fn))| {
            tp += c_tp;
            fp += c_fp;
            fn_count += c_fn;
            (category, Metrics::from_counts(c_tp, c_fp, c_fn))
        })
        .collect();
    EvalReport {
        categories,
        overall: Metrics::from_counts(tp, fp, fn_count),
    }
}

/// Lowercase display name used in report rows.
pub fn display_name(category: Category) -> &'static str {
    match category {
        Category::Person => "person",
        Category::Norp => "NORP",
        Category::Fac => "FAC",
        Category::Org => "organisation",
        Category::Gpe => "GPE",
        Category::Location => "location",
        Category::Product => "product",
        Category::Event => "event",
        Category::WorkOfArt => "work_of_art",
        Category::Law => "law",
        Category::Language => "language",
        Category::Date => "date",
        Category::Time => "time",
        Category::Percent => "percent",
        Category::Money => "money",
        Category::Quantity => "quantity",
        Category::Ordinal => "ordinal",
        Category::Cardinal => "cardinal",
        Category::Miscellaneous => "miscellaneous",
    }
}

/// Report row ordering: location, organisation, person, then the remaining
/// categories in canonical order.
pub fn report_category_order() -> Vec<Category> {
    let head = [Category::Location, Category::Org, Category::Person];
    head.into_iter()
        .chain(Category::ALL.into_iter().filter(|c| !head.contains(c)))
        .collect()
}

/// Renders per-model statistics as one tab-separated row per model:
/// model id, dataset name, total execution seconds (two decimals), and the
/// category counts as "name:count, ... (Total = N)" with zero counts
/// skipped.
pub fn report_table(stats: &RunStatistics, dataset_name: &str) -> String {
    let mut out = String::new();
    for (model_id, model) in &stats.models {
        let mut parts = Vec::new();
        let mut total = 0u64;
        for category in report_category_order() {
            let count = model.entities.get(&category).copied().unwrap_or(0);
            total += count;
            if count > 0 {
                parts.push(format!("{}:{}", display_name(category), count));
            }
        }
        let fragment = if parts.is_empty() {
            format!("(Total = {total})")
        } else {
            format!("{} (Total = {total})", parts.join(", "))
        };
        out.push_str(&format!(
            "{model_id}\t{dataset_name}\t{:.2}\t{fragment}\n",
            model.total_exec_time_s
        ));
    }
    out
}
