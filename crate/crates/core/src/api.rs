//! REST service over processed results: browse documents, summaries,
//! entities, models, categories, and statistics; trigger a run; proxy
//! complementary NLP tasks to configured backends.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Body;
use axum::extract::{Path, Query, State};
use axum::http::{header::CONTENT_TYPE, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::AdapterConfig;
use crate::ingest::store::{store_get_raw, store_list, StoreConnection, StoreError};
use crate::model::category::Category;
use crate::model::mention::EntityMention;
use crate::model::registry::Registry;
use crate::model::settings::{fingerprint_settings, RunSettings};
use crate::pipeline::{
    execute_run, parse_result, DocumentResult, RunOptions, RunStatistics, RESULT_ID_PREFIX,
    RUN_STATS_FILE, RUN_STATS_ID,
};
use crate::recognizers::NativeResources;

pub const DEFAULT_PAGE_LIMIT: usize = 100;
pub const MAX_PAGE_LIMIT: usize = 1000;

/// Where the service reads processed results from.
#[derive(Debug, Clone)]
pub enum ResultsSource {
    /// A directory of "*.result.json" files plus "run_stats.json".
    Directory(PathBuf),
    /// A store holding "result::{doc_id}" documents plus "run_stats".
    Store(StoreConnection),
}

impl ResultsSource {
    /// Builds the doc_id → location index by scanning the source.
    fn index(&self) -> Result<BTreeMap<String, String>, String> {
        match self {
            ResultsSource::Directory(dir) => {
                let mut index = BTreeMap::new();
                let entries = std::fs::read_dir(dir)
                    .map_err(|e| format!("cannot read results directory {dir:?}: {e}"))?;
                for entry in entries {
                    let entry = entry.map_err(|e| format!("directory walk failed: {e}"))?;
                    let path = entry.path();
                    let name = entry.file_name().to_string_lossy().into_owned();
                    if !name.ends_with(".result.json") {
                        continue;
                    }
                    let content = match std::fs::read_to_string(&path) {
                        Ok(content) => content,
                        Err(e) => {
                            log::warn!("skipping unreadable result {path:?}: {e}");
                            continue;
                        }
                    };
                    match doc_id_of(&content) {
                        Some(doc_id) => {
                            index.insert(doc_id, path.to_string_lossy().into_owned());
                        }
                        None => log::warn!("skipping malformed result {path:?}"),
                    }
                }
                Ok(index)
            }
            ResultsSource::Store(connection) => {
                let ids = store_list(connection).map_err(|e| e.to_string())?;
                Ok(ids
                    .into_iter()
                    .filter_map(|id| {
                        id.strip_prefix(RESULT_ID_PREFIX)
                            .map(|doc_id| (doc_id.to_string(), id.clone()))
                    })
                    .collect())
            }
        }
    }

    /// Reads one result verbatim, as persisted.
    fn load_verbatim(&self, location: &str) -> Result<String, String> {
        match self {
            ResultsSource::Directory(_) => std::fs::read_to_string(location)
                .map_err(|e| format!("cannot read {location}: {e}")),
            ResultsSource::Store(connection) => {
                let mut value =
                    store_get_raw(connection, location).map_err(|e| e.to_string())?;
                if let Some(object) = value.as_object_mut() {
                    object.remove("_id");
                    object.remove("_rev");
                }
                let mut rendered =
                    serde_json::to_string_pretty(&value).map_err(|e| e.to_string())?;
                rendered.push('\n');
                Ok(rendered)
            }
        }
    }

    /// Run statistics, zeroed when none were written yet.
    fn stats(&self) -> Result<RunStatistics, String> {
        match self {
            ResultsSource::Directory(dir) => {
                let path = dir.join(RUN_STATS_FILE);
                match std::fs::read_to_string(&path) {
                    Ok(content) => serde_json::from_str(&content)
                        .map_err(|e| format!("malformed {path:?}: {e}")),
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                        Ok(RunStatistics::default())
                    }
                    Err(e) => Err(format!("cannot read {path:?}: {e}")),
                }
            }
            ResultsSource::Store(connection) => match store_get_raw(connection, RUN_STATS_ID) {
                Ok(value) => serde_json::from_value(value)
                    .map_err(|e| format!("malformed run statistics: {e}")),
                Err(StoreError::NotFound { .. }) => Ok(RunStatistics::default()),
                Err(e) => Err(e.to_string()),
            },
        }
    }
}

fn doc_id_of(content: &str) -> Option<String> {
    #[derive(Deserialize)]
    struct DocIdOnly {
        doc_id: String,
    }
    serde_json::from_str::<DocIdOnly>(content).ok().map(|d| d.doc_id)
}

/// Complementary NLP tasks the service can proxy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum NlpTask {
    Pos,
    Depparse,
    Coref,
}

impl NlpTask {
    pub fn as_str(&self) -> &'static str {
        match self {
            NlpTask::Pos => "pos",
            NlpTask::Depparse => "depparse",
            NlpTask::Coref => "coref",
        }
    }
}

impl FromStr for NlpTask {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pos" => Ok(NlpTask::Pos),
            "depparse" => Ok(NlpTask::Depparse),
            "coref" => Ok(NlpTask::Coref),
            _ => Err(()),
        }
    }
}

/// Mention selection for the entities endpoint. Unset fields match
/// everything; `surface_contains` is a case-sensitive substring test.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityFilter {
    pub category: Option<Category>,
    pub model_id: Option<String>,
    pub surface_contains: Option<String>,
    pub limit: usize,
    pub offset: usize,
}

impl Default for EntityFilter {
    fn default() -> Self {
        EntityFilter {
            category: None,
            model_id: None,
            surface_contains: None,
            limit: DEFAULT_PAGE_LIMIT,
            offset: 0,
        }
    }
}

/// One page of matching mentions. `total` counts all matches before
/// pagination, so `offset ≥ total` yields an empty page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityPage {
    pub entities: Vec<EntityMention>,
    pub total: usize,
    pub limit: usize,
    pub offset: usize,
}

/// Filters and pages the mentions of one result. Matches are ordered by
/// (start, model_id, end, category, surface).
pub fn query_entities(result: &DocumentResult, filter: &EntityFilter) -> EntityPage {
    let mut matches: Vec<&EntityMention> = result
        .model_results
        .iter()
        .flat_map(|r| r.entities.iter())
        .filter(|m| filter.category.is_none_or(|c| m.category == c))
        .filter(|m| {
            filter
                .model_id
                .as_deref()
                .is_none_or(|model| m.model_id == model)
        })
        .filter(|m| {
            filter
                .surface_contains
                .as_deref()
                .is_none_or(|needle| m.surface.contains(needle))
        })
        .collect();
    matches.sort_by(|a, b| {
        a.start
            .cmp(&b.start)
            .then_with(|| a.model_id.cmp(&b.model_id))
            .then_with(|| a.end.cmp(&b.end))
            .then_with(|| a.category.as_str().cmp(b.category.as_str()))
            .then_with(|| a.surface.cmp(&b.surface))
    });
    let total = matches.len();
    let entities = matches
        .into_iter()
        .skip(filter.offset)
        .take(filter.limit)
        .cloned()
        .collect();
    EntityPage {
        entities,
        total,
        limit: filter.limit,
        offset: filter.offset,
    }
}

/// Everything the service needs to run.
#[derive(Debug, Clone)]
pub struct ApiConfig {
    pub source: ResultsSource,
    pub registry: Registry,
    /// Resources handed to runs triggered through POST /process.
    pub resources: NativeResources,
    pub adapter: AdapterConfig,
    /// Task name → endpoint for the NLP proxy.
    pub nlp_backends: BTreeMap<String, String>,
    pub bind: SocketAddr,
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("cannot bind {addr}: {message}")]
    Bind { addr: SocketAddr, message: String },
    #[error("results source unusable: {0}")]
    Source(String),
    #[error("configuration error: {0}")]
    Config(String),
}

struct ApiState {
    source: ResultsSource,
    registry: Registry,
    resources: NativeResources,
    adapter: AdapterConfig,
    nlp_backends: BTreeMap<NlpTask, String>,
    index: RwLock<BTreeMap<String, String>>,
    run_busy: AtomicBool,
}

/// A running service. Dropping it shuts the server down.
#[derive(Debug)]
pub struct ApiService {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ApiService {
    /// Validates the source, binds, and serves on a background thread.
    pub fn start(config: ApiConfig) -> Result<ApiService, ApiError> {
        let mut nlp_backends = BTreeMap::new();
        for (task, endpoint) in &config.nlp_backends {
            let parsed: NlpTask = task
                .parse()
                .map_err(|_| ApiError::Config(format!("unknown NLP task {task:?}")))?;
            nlp_backends.insert(parsed, endpoint.clone());
        }
        let index = config.source.index().map_err(ApiError::Source)?;
        let state = Arc::new(ApiState {
            source: config.source,
            registry: config.registry,
            resources: config.resources,
            adapter: config.adapter,
            nlp_backends,
            index: RwLock::new(index),
            run_busy: AtomicBool::new(false),
        });
        let bind = config.bind;
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (shutdown_tx, shutdown_rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let runtime = match tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
            {
                Ok(runtime) => runtime,
                Err(e) => {
                    let _ = addr_tx.send(Err(format!("runtime construction failed: {e}")));
                    return;
                }
            };
            runtime.block_on(async move {
                let listener = match tokio::net::TcpListener::bind(bind).await {
                    Ok(listener) => listener,
                    Err(e) => {
                        let _ = addr_tx.send(Err(e.to_string()));
                        return;
                    }
                };
                let addr = listener.local_addr().expect("bound listener has an address");
                let _ = addr_tx.send(Ok(addr));
                let app = router(state);
                let served = axum::serve(listener, app).with_graceful_shutdown(async {
                    let _ = shutdown_rx.await;
                });
                if let Err(e) = served.await {
                    log::error!("service stopped with error: {e}");
                }
            });
        });
        match addr_rx.recv() {
            Ok(Ok(addr)) => Ok(ApiService {
                addr,
                shutdown: Some(shutdown_tx),
                thread: Some(thread),
            }),
            Ok(Err(message)) => {
                let _ = thread.join();
                Err(ApiError::Bind {
                    addr: bind,
                    message,
                })
            }
            Err(_) => {
                let _ = thread.join();
                Err(ApiError::Bind {
                    addr: bind,
                    message: "server thread exited before binding".to_string(),
                })
            }
        }
    }

    /// Blocks until the service stops (it only stops on shutdown).
    pub fn wait(mut self) {
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

impl Drop for ApiService {
    fn drop(&mut self) {
        if let Some(shutdown) = self.shutdown.take() {
            let _ = shutdown.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

fn router(state: Arc<ApiState>) -> Router {
    Router::new()
        .route("/docs", get(list_docs))
        .route("/docs/{id}/results", get(doc_results))
        .route("/docs/{id}/summary", get(doc_summary))
        .route("/docs/{id}/entities", get(doc_entities))
        .route("/models", get(list_models))
        .route("/categories", get(list_categories))
        .route("/stats", get(run_stats))
        .route("/process", post(process_trigger))
        .route("/nlp/{task}", post(nlp_proxy))
        .with_state(state)
}

/// Uniform error payload: {"error": message, "code": class}.
struct ApiFailure {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiFailure {
    fn not_found(what: impl Into<String>) -> Self {
        ApiFailure {
            status: StatusCode::NOT_FOUND,
            code: "not_found",
            message: what.into(),
        }
    }

    fn bad_filter(message: impl Into<String>) -> Self {
        ApiFailure {
            status: StatusCode::BAD_REQUEST,
            code: "bad_filter",
            message: message.into(),
        }
    }

    fn source(message: impl Into<String>) -> Self {
        ApiFailure {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "source",
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiFailure {
    fn into_response(self) -> Response {
        let body = serde_json::json!({"error": self.message, "code": self.code});
        (self.status, Json(body)).into_response()
    }
}

async fn blocking<T: Send + 'static>(
    task: impl FnOnce() -> T + Send + 'static,
) -> Result<T, ApiFailure> {
    tokio::task::spawn_blocking(task)
        .await
        .map_err(|e| ApiFailure::source(format!("worker failed: {e}")))
}

/// Refreshes the index from the source and returns it.
fn refreshed_index(state: &ApiState) -> Result<BTreeMap<String, String>, String> {
    let fresh = state.source.index()?;
    *state.index.write().expect("index lock") = fresh.clone();
    Ok(fresh)
}

/// Finds a document's location, refreshing the index once on a miss.
fn locate(state: &ApiState, doc_id: &str) -> Result<Option<String>, String> {
    if let Some(location) = state.index.read().expect("index lock").get(doc_id) {
        return Ok(Some(location.clone()));
    }
    Ok(refreshed_index(state)?.get(doc_id).cloned())
}

fn load_result(state: &ApiState, doc_id: &str) -> Result<(String, DocumentResult), ApiFailure> {
    let location = locate(state, doc_id)
        .map_err(ApiFailure::source)?
        .ok_or_else(|| ApiFailure::not_found(format!("no result for doc {doc_id:?}")))?;
    let verbatim = state
        .source
        .load_verbatim(&location)
        .map_err(ApiFailure::source)?;
    let parsed = parse_result(&verbatim)
        .map_err(|e| ApiFailure::source(format!("stored result is invalid: {e}")))?;
    Ok((verbatim, parsed))
}

async fn list_docs(State(state): State<Arc<ApiState>>) -> Result<Json<Vec<String>>, ApiFailure> {
    let index = blocking(move || refreshed_index(&state))
        .await?
        .map_err(ApiFailure::source)?;
    Ok(Json(index.into_keys().collect()))
}

async fn doc_results(
    State(state): State<Arc<ApiState>>,
    Path(doc_id): Path<String>,
) -> Result<Response, ApiFailure> {
    let (verbatim, _) = blocking(move || load_result(&state, &doc_id)).await??;
    Ok(([(CONTENT_TYPE, "application/json")], verbatim).into_response())
}

async fn doc_summary(
    State(state): State<Arc<ApiState>>,
    Path(doc_id): Path<String>,
) -> Result<Response, ApiFailure> {
    let (_, result) = blocking(move || load_result(&state, &doc_id)).await??;
    Ok(Json(result.summary).into_response())
}

fn parse_filter(params: &BTreeMap<String, String>) -> Result<EntityFilter, ApiFailure> {
    let mut filter = EntityFilter::default();
    if let Some(raw) = params.get("category") {
        filter.category = Some(
            raw.parse()
                .map_err(|_| ApiFailure::bad_filter(format!("unknown category {raw:?}")))?,
        );
    }
    if let Some(model) = params.get("model") {
        filter.model_id = Some(model.clone());
    }
    if let Some(needle) = params.get("contains") {
        filter.surface_contains = Some(needle.clone());
    }
    if let Some(raw) = params.get("limit") {
        let limit: usize = raw
            .parse()
            .map_err(|_| ApiFailure::bad_filter(format!("limit {raw:?} is not a number")))?;
        if !(1..=MAX_PAGE_LIMIT).contains(&limit) {
            return Err(ApiFailure::bad_filter(format!(
                "limit must be in [1, {MAX_PAGE_LIMIT}], got {limit}"
            )));
        }
        filter.limit = limit;
    }
    if let Some(raw) = params.get("offset") {
        filter.offset = raw
            .parse()
            .map_err(|_| ApiFailure::bad_filter(format!("offset {raw:?} is not a number")))?;
    }
    Ok(filter)
}

async fn doc_entities(
    State(state): State<Arc<ApiState>>,
    Path(doc_id): Path<String>,
    Query(params): Query<BTreeMap<String, String>>,
) -> Result<Json<EntityPage>, ApiFailure> {
    let filter = parse_filter(&params)?;
    let page = blocking(move || -> Result<EntityPage, ApiFailure> {
        let (_, result) = load_result(&state, &doc_id)?;
        if let Some(model) = filter.model_id.as_deref() {
            let known = state.registry.contains(model)
                || result.model_results.iter().any(|r| r.model_id == model);
            if !known {
                return Err(ApiFailure::bad_filter(format!("unknown model {model:?}")));
            }
        }
        Ok(query_entities(&result, &filter))
    })
    .await??;
    Ok(Json(page))
}

async fn list_models(State(state): State<Arc<ApiState>>) -> Json<serde_json::Value> {
    let models: Vec<&crate::model::registry::ModelDescriptor> = state.registry.iter().collect();
    Json(serde_json::to_value(models).expect("descriptors serialize"))
}

async fn list_categories() -> Json<Vec<&'static str>> {
    Json(Category::sorted_names())
}

async fn run_stats(State(state): State<Arc<ApiState>>) -> Result<Json<RunStatistics>, ApiFailure> {
    let stats = blocking(move || state.source.stats())
        .await?
        .map_err(ApiFailure::source)?;
    Ok(Json(stats))
}

async fn process_trigger(
    State(state): State<Arc<ApiState>>,
    Json(settings): Json<RunSettings>,
) -> Result<Json<serde_json::Value>, ApiFailure> {
    if let Err(e) = settings.validate(&state.registry) {
        return Err(ApiFailure {
            status: StatusCode::BAD_REQUEST,
            code: "config",
            message: e.to_string(),
        });
    }
    if state
        .run_busy
        .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
        .is_err()
    {
        return Err(ApiFailure {
            status: StatusCode::CONFLICT,
            code: "busy",
            message: "a run is already in progress".to_string(),
        });
    }
    let run_id = fingerprint_settings(&settings);
    let worker_state = Arc::clone(&state);
    std::thread::spawn(move || {
        let options = RunOptions {
            workers: None,
            adapter: worker_state.adapter.clone(),
        };
        let outcome = execute_run(
            &settings,
            &worker_state.registry,
            &worker_state.resources,
            &options,
        );
        match outcome {
            Ok((results, _)) => log::info!("triggered run finished: {} document(s)", results.len()),
            Err(e) => log::error!("triggered run failed: {e}"),
        }
        worker_state.run_busy.store(false, Ordering::SeqCst);
    });
    Ok(Json(serde_json::json!({"run_id": run_id, "status": "started"})))
}

async fn nlp_proxy(
    State(state): State<Arc<ApiState>>,
    Path(task): Path<String>,
    Json(body): Json<serde_json::Value>,
) -> Result<Response, ApiFailure> {
    let task: NlpTask = task.parse().map_err(|_| ApiFailure {
        status: StatusCode::NOT_FOUND,
        code: "unknown_task",
        message: format!("unknown NLP task {task:?}"),
    })?;
    let endpoint = state.nlp_backends.get(&task).ok_or_else(|| ApiFailure {
        status: StatusCode::SERVICE_UNAVAILABLE,
        code: "task_not_configured",
        message: format!("no backend configured for task {:?}", task.as_str()),
    })?;
    let text = body.get("text").and_then(|v| v.as_str()).ok_or_else(|| ApiFailure {
        status: StatusCode::BAD_REQUEST,
        code: "bad_request",
        message: "body must be a JSON object with a \"text\" string".to_string(),
    })?;

    let url = format!("{}/{}", endpoint.trim_end_matches('/'), task.as_str());
    let upstream = || ApiFailure {
        status: StatusCode::BAD_GATEWAY,
        code: "upstream",
        message: String::new(),
    };
    let client = reqwest::Client::builder()
        .timeout(state.adapter.timeout)
        .build()
        .map_err(|e| ApiFailure {
            message: format!("client construction failed: {e}"),
            ..upstream()
        })?;
    let response = client
        .post(&url)
        .json(&serde_json::json!({"text": text}))
        .send()
        .await
        .map_err(|e| ApiFailure {
            message: format!("backend unreachable: {e}"),
            ..upstream()
        })?;
    let status = response.status();
    let content_type = response.headers().get(CONTENT_TYPE).cloned();
    let bytes = response.bytes().await.map_err(|e| ApiFailure {
        message: format!("backend body unreadable: {e}"),
        ..upstream()
    })?;
    if !status.is_success() {
        return Err(ApiFailure {
            message: format!(
                "backend returned HTTP {}: {}",
                status.as_u16(),
                String::from_utf8_lossy(&bytes)
            ),
            ..upstream()
        });
    }
    let mut builder = Response::builder().status(StatusCode::OK);
    if let Some(content_type) = content_type {
        builder = builder.header(CONTENT_TYPE, content_type);
    }
    Ok(builder
        .body(Body::from(bytes))
        .expect("proxy response assembles"))
}
