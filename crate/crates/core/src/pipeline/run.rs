//! Run orchestration: documents in, persisted results and statistics out.
//!
//! Documents are processed by a bounded worker pool; blocks and models stay
//! strictly sequential within each document. Every document's result is
//! persisted as soon as it is complete.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::Utc;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adapters::{run_external_backend, AdapterConfig};
use crate::ingest::store::{store_list, store_upsert};
use crate::ingest::{
    doc_id_from_path, load_extracted_record, load_plain_text, scan_input, DocumentRecord,
};
use crate::model::registry::{ModelKind, Registry};
use crate::model::settings::{
    fingerprint_settings, InputFormat, InputSource, OutputSink, ProcessingBlock, RunSettings,
};
use crate::pipeline::{
    accumulate_stats, build_summary, merge_stats, render_result, DocumentResult, ModelRunResult,
    RunStatistics,
};
use crate::recognizers::{run_native_backend, NativeResources};

/// Store ids reserved for run output; both are skipped when a store is used
/// as the input corpus.
pub const RESULT_ID_PREFIX: &str = "result::";
pub const RUN_STATS_ID: &str = "run_stats";
pub const RUN_STATS_FILE: &str = "run_stats.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Raised before any processing starts.
    #[error("configuration error: {0}")]
    Config(String),
    /// Output became unwritable; the run aborts, already-written results
    /// remain.
    #[error("output sink failure: {0}")]
    Sink(String),
}

/// Tuning knobs for one run that are not part of the settings fingerprint.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker thread count; defaults to available parallelism.
    pub workers: Option<usize>,
    /// Adapter behavior for external models.
    pub adapter: AdapterConfig,
}

/// Runs every enabled model in `block` over `doc`, in declared order. A
/// model failure is captured in its result; later models still run.
pub fn run_block(
    block: &ProcessingBlock,
    doc: &DocumentRecord,
    registry: &Registry,
    resources: &NativeResources,
    settings: &RunSettings,
    adapter: &AdapterConfig,
) -> Vec<ModelRunResult> {
    block
        .models
        .iter()
        .map(|model_id| {
            let Some(desc) = registry.get(model_id) else {
                // Upfront validation makes this unreachable in execute_run;
                // direct callers get a captured failure.
                return ModelRunResult::failed(model_id, 0.0, "unknown model".to_string());
            };
            match desc.kind {
                ModelKind::Native => {
                    run_native_backend(model_id, doc, resources, settings.context_policy)
                        .unwrap_or_else(|e| ModelRunResult::failed(model_id, 0.0, e.to_string()))
                }
                ModelKind::External => run_external_backend(
                    desc,
                    doc,
                    settings.context_policy,
                    settings.strict_labels,
                    adapter,
                ),
            }
        })
        .collect()
}

/// File-system-safe rendering of a doc id. Lossy sanitization appends a
/// short content hash so distinct ids cannot collide on disk.
fn sanitize_doc_id(doc_id: &str) -> String {
    let safe: String = doc_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if safe == doc_id && !safe.is_empty() {
        safe
    } else {
        let digest = Sha256::digest(doc_id.as_bytes());
        let tag: String = digest.iter().take(4).map(|b| format!("{b:02x}")).collect();
        format!("{safe}-{tag}")
    }
}

fn write_atomic(dir: &Path, file_name: &str, content: &str) -> Result<PathBuf, PipelineError> {
    use std::io::Write;
    let target = dir.join(file_name);
    let mut temp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| PipelineError::Sink(format!("cannot create temp file in {dir:?}: {e}")))?;
    temp.write_all(content.as_bytes())
        .map_err(|e| PipelineError::Sink(format!("cannot write {target:?}: {e}")))?;
    temp.persist(&target)
        .map_err(|e| PipelineError::Sink(format!("cannot persist {target:?}: {e}")))?;
    Ok(target)
}

/// Persists one result: directory sinks get "{doc_id}.result.json" written
/// atomically, store sinks get document "result::{doc_id}". Returns the
/// stored location.
pub fn write_result(sink: &OutputSink, result: &DocumentResult) -> Result<String, PipelineError> {
    let rendered = render_result(result);
    match sink {
        OutputSink::Directory { path } => {
            let file_name = format!("{}.result.json", sanitize_doc_id(&result.doc_id));
            let target = write_atomic(path, &file_name, &rendered)?;
            Ok(target.to_string_lossy().into_owned())
        }
        OutputSink::Store { connection } => {
            let id = format!("{RESULT_ID_PREFIX}{}", result.doc_id);
            let payload: serde_json::Value =
                serde_json::from_str(&rendered).expect("rendered results are JSON");
            store_upsert(connection, &id, &payload)
                .map_err(|e| PipelineError::Sink(e.to_string()))?;
            Ok(id)
        }
    }
}

fn write_stats(sink: &OutputSink, stats: &RunStatistics) -> Result<(), PipelineError> {
    match sink {
        OutputSink::Directory { path } => {
            let mut rendered =
                serde_json::to_string_pretty(stats).expect("statistics serialize");
            rendered.push('\n');
            write_atomic(path, RUN_STATS_FILE, &rendered)?;
        }
        OutputSink::Store { connection } => {
            let payload = serde_json::to_value(stats).expect("statistics serialize");
            store_upsert(connection, RUN_STATS_ID, &payload)
                .map_err(|e| PipelineError::Sink(e.to_string()))?;
        }
    }
    Ok(())
}

fn input_extension(format: InputFormat) -> &'static str {
    match format {
        InputFormat::Text => "txt",
        InputFormat::Extracted => "json",
    }
}

fn load_file(path: &Path, format: InputFormat) -> Result<DocumentRecord, PipelineError> {
    let loaded = match format {
        InputFormat::Text => load_plain_text(path),
        InputFormat::Extracted => load_extracted_record(path),
    };
    loaded.map_err(|e| PipelineError::Config(e.to_string()))
}

/// Reads every input document up front. Directories are scanned recursively
/// for the format's extension; ids for scanned files derive from the path
/// relative to the scanned root, ids for directly listed files from the file
/// name. A store input takes every document except run output.
fn acquire_documents(
    input: &InputSource,
) -> Result<Vec<DocumentRecord>, PipelineError> {
    let mut documents = Vec::new();
    match input {
        InputSource::Files { paths, format } => {
            for path in paths {
                if path.is_dir() {
                    let files = scan_input(path, &[input_extension(*format)])
                        .map_err(|e| PipelineError::Config(e.to_string()))?;
                    for file in files {
                        let mut doc = load_file(&file, *format)?;
                        if *format == InputFormat::Text {
                            let relative = file.strip_prefix(path).unwrap_or(&file);
                            doc.doc_id = doc_id_from_path(relative);
                        }
                        documents.push(doc);
                    }
                } else {
                    let mut doc = load_file(path, *format)?;
                    if *format == InputFormat::Text {
                        let name: &Path = path
                            .file_name()
                            .map(Path::new)
                            .unwrap_or(path.as_path());
                        doc.doc_id = doc_id_from_path(name);
                    }
                    documents.push(doc);
                }
            }
        }
        InputSource::Store { connection } => {
            let ids = store_list(connection).map_err(|e| PipelineError::Config(e.to_string()))?;
            for id in ids {
                if id.starts_with(RESULT_ID_PREFIX) || id == RUN_STATS_ID || id.starts_with('_') {
                    continue;
                }
                let doc = crate::ingest::store::store_get(connection, &id)
                    .map_err(|e| PipelineError::Config(e.to_string()))?;
                documents.push(doc);
            }
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for doc in &documents {
        if !seen.insert(doc.doc_id.clone()) {
            return Err(PipelineError::Config(format!(
                "duplicate doc_id {:?} in input",
                doc.doc_id
            )));
        }
    }
    Ok(documents)
}

fn prepare_sink(sink: &OutputSink) -> Result<(), PipelineError> {
    match sink {
        OutputSink::Directory { path } => std::fs::create_dir_all(path)
            .map_err(|e| PipelineError::Sink(format!("cannot create {path:?}: {e}"))),
        OutputSink::Store { connection } => connection
            .validate()
            .map_err(|e| PipelineError::Sink(e.to_string())),
    }
}

/// Executes a full run: validate, ingest, process every document through the
/// blocks, persist each result as it completes, and write run statistics at
/// the end. Returns the results in input order plus the accumulated
/// statistics.
pub fn execute_run(
    settings: &RunSettings,
    registry: &Registry,
    resources: &NativeResources,
    options: &RunOptions,
) -> Result<(Vec<DocumentResult>, RunStatistics), PipelineError> {
    settings
        .validate(registry)
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let fingerprint = fingerprint_settings(settings);
    let documents = acquire_documents(&settings.input)?;
    prepare_sink(&settings.output)?;

    let worker_count = options
        .workers
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .max(1)
        .min(documents.len().max(1));

    let next = AtomicUsize::new(0);
    let aborted = AtomicBool::new(false);
    let failure: Mutex<Option<PipelineError>> = Mutex::new(None);
    let slots: Vec<Mutex<Option<DocumentResult>>> =
        documents.iter().map(|_| Mutex::new(None)).collect();
    let totals: Mutex<RunStatistics> = Mutex::new(RunStatistics::default());

    std::thread::scope(|scope| {
        for _ in 0..worker_count {
            scope.spawn(|| {
                let mut partial = RunStatistics::default();
                loop {
                    if aborted.load(Ordering::SeqCst) {
                        break;
                    }
                    let index = next.fetch_add(1, Ordering::SeqCst);
                    let Some(doc) = documents.get(index) else {
                        break;
                    };
                    let mut model_results = Vec::new();
                    for block in &settings.blocks {
                        model_results.extend(run_block(
                            block,
                            doc,
                            registry,
                            resources,
                            settings,
                            &options.adapter,
                        ));
                    }
                    let summary = build_summary(&model_results);
                    let result = DocumentResult {
                        doc_id: doc.doc_id.clone(),
                        source_uri: doc.source_uri.clone(),
                        settings_fingerprint: fingerprint.clone(),
                        created_at: Utc::now(),
                        model_results,
                        summary,
                    };
                    if let Err(e) = write_result(&settings.output, &result) {
                        let mut first = failure.lock().expect("failure lock");
                        if first.is_none() {
                            *first = Some(e);
                        }
                        aborted.store(true, Ordering::SeqCst);
                        break;
                    }
                    accumulate_stats(&mut partial, &result);
                    *slots[index].lock().expect("slot lock") = Some(result);
                }
                merge_stats(&mut totals.lock().expect("totals lock"), partial);
            });
        }
    });

    if let Some(error) = failure.lock().expect("failure lock").take() {
        return Err(error);
    }
    let results: Vec<DocumentResult> = slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("slot lock")
                .expect("every document processed")
        })
        .collect();
    let stats = totals.into_inner().expect("totals lock");
    write_stats(&settings.output, &stats)?;
    log::info!(
        "run complete: {} document(s), {} model run(s)",
        results.len(),
        results.iter().map(|r| r.model_results.len()).sum::<usize>()
    );
    Ok((results, stats))
}
