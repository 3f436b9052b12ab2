//! HTTP client for external NER model servers. All remote models speak one
//! wire protocol: POST {endpoint}/annotate with {"model","text"}, GET
//! {endpoint}/models. Remote offsets are validated against the document,
//! never repaired.

use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::DocumentRecord;
use crate::model::category::normalize_category;
use crate::model::mention::{scalar_len, scalar_slice, validate_mention, EntityMention};
use crate::model::registry::{ModelDescriptor, ModelKind};
use crate::model::settings::ContextPolicy;
use crate::pipeline::ModelRunResult;
use crate::textkit::{split_sentences, ContextBuilder};

pub const DEFAULT_MAX_TEXT_SCALARS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateRequest {
    pub model: String,
    pub text: String,
}

/// Entity as the wire carries it: the label is the remote model's raw string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateEntity {
    pub surface: String,
    pub label: String,
    pub start: usize,
    pub end: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateResponse {
    pub entities: Vec<AnnotateEntity>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelsResponse {
    models: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RemoteErrorBody {
    error: String,
}

#[derive(Debug, Clone)]
pub struct AdapterConfig {
    /// Per-request timeout.
    pub timeout: Duration,
    /// Retries after the first attempt, for timeouts and 5xx only.
    pub retries: u32,
    /// First retry delay; doubles on each further retry.
    pub backoff_base: Duration,
    /// Largest request text in Unicode scalars; longer documents are split
    /// on sentence boundaries.
    pub max_text: usize,
    /// In-flight request cap per endpoint. The first configuration seen for
    /// an endpoint fixes its cap for the process.
    pub max_in_flight: usize,
    /// Static bearer token sent as the Authorization header.
    pub bearer: Option<String>,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig {
            timeout: Duration::from_secs(30),
            retries: 3,
            backoff_base: Duration::from_millis(250),
            max_text: DEFAULT_MAX_TEXT_SCALARS,
            max_in_flight: 4,
            bearer: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("transport failure after {attempts} attempt(s) to {endpoint}: {message}")]
    Transport {
        endpoint: String,
        attempts: u32,
        message: String,
    },
    #[error("non-conforming response from {endpoint}: {message}")]
    Protocol { endpoint: String, message: String },
    #[error("remote error from {endpoint} (HTTP {status}): {message}")]
    Remote {
        endpoint: String,
        status: u16,
        message: String,
    },
    #[error("request text has {length} scalars, over the {max} limit")]
    TooLarge { length: usize, max: usize },
}

// Per-endpoint in-flight cap. A plain counting semaphore; keyed by endpoint.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn acquire(self: &Arc<Self>) -> Permit {
        let mut permits = self.permits.lock().expect("semaphore lock");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("semaphore wait");
        }
        *permits -= 1;
        Permit(Arc::clone(self))
    }
}

struct Permit(Arc<Semaphore>);

impl Drop for Permit {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("semaphore lock") += 1;
        self.0.available.notify_one();
    }
}

fn endpoint_permit(endpoint: &str, cap: usize) -> Permit {
    static LIMITERS: OnceLock<Mutex<BTreeMap<String, Arc<Semaphore>>>> = OnceLock::new();
    let limiters = LIMITERS.get_or_init(|| Mutex::new(BTreeMap::new()));
    let semaphore = {
        let mut map = limiters.lock().expect("limiter lock");
        Arc::clone(map.entry(endpoint.to_string()).or_insert_with(|| {
            Arc::new(Semaphore {
                permits: Mutex::new(cap.max(1)),
                available: Condvar::new(),
            })
        }))
    };
    semaphore.acquire()
}

fn annotate_url(endpoint: &str) -> String {
    format!("{}/annotate", endpoint.trim_end_matches('/'))
}

fn models_url(endpoint: &str) -> String {
    format!("{}/models", endpoint.trim_end_matches('/'))
}

fn client(config: &AdapterConfig) -> Result<reqwest::blocking::Client, AdapterError> {
    reqwest::blocking::Client::builder()
        .timeout(config.timeout)
        .build()
        .map_err(|e| AdapterError::Protocol {
            endpoint: String::new(),
            message: format!("client construction failed: {e}"),
        })
}

fn apply_bearer(
    builder: reqwest::blocking::RequestBuilder,
    config: &AdapterConfig,
) -> reqwest::blocking::RequestBuilder {
    match &config.bearer {
        Some(token) => builder.header("Authorization", format!("Bearer {token}")),
        None => builder,
    }
}

/// Sends one annotate request, retrying timeouts and 5xx responses with
/// exponential backoff. Returns the parsed response and how many attempts
/// were made.
pub fn http_annotate(
    endpoint: &str,
    request: &AnnotateRequest,
    config: &AdapterConfig,
) -> Result<(AnnotateResponse, u32), AdapterError> {
    let length = scalar_len(&request.text);
    if length > config.max_text {
        return Err(AdapterError::TooLarge {
            length,
            max: config.max_text,
        });
    }
    let _permit = endpoint_permit(endpoint, config.max_in_flight);
    let client = client(config)?;
    let url = annotate_url(endpoint);
    let max_attempts = config.retries.saturating_add(1);
    let mut last_failure = String::new();
    for attempt in 1..=max_attempts {
        if attempt > 1 {
            let delay = config.backoff_base.saturating_mul(1 << (attempt - 2).min(31));
            std::thread::sleep(delay);
        }
        let outcome = apply_bearer(client.post(&url), config).json(request).send();
        match outcome {
            Err(e) => {
                log::warn!("annotate attempt {attempt}/{max_attempts} to {url} failed: {e}");
                last_failure = e.to_string();
            }
            Ok(response) => {
                let status = response.status();
                if status.is_success() {
                    let body = response.text().map_err(|e| AdapterError::Protocol {
                        endpoint: endpoint.to_string(),
                        message: format!("unreadable body: {e}"),
                    })?;
                    let parsed: AnnotateResponse =
                        serde_json::from_str(&body).map_err(|e| AdapterError::Protocol {
                            endpoint: endpoint.to_string(),
                            message: format!("malformed annotate body: {e}"),
                        })?;
                    return Ok((parsed, attempt));
                }
                if status.is_client_error() {
                    let body = response.text().unwrap_or_default();
                    let message = serde_json::from_str::<RemoteErrorBody>(&body)
                        .map(|b| b.error)
                        .unwrap_or(body);
                    return Err(AdapterError::Remote {
                        endpoint: endpoint.to_string(),
                        status: status.as_u16(),
                        message,
                    });
                }
                log::warn!("annotate attempt {attempt}/{max_attempts} to {url}: HTTP {status}");
                last_failure = format!("HTTP {}", status.as_u16());
            }
        }
    }
    Err(AdapterError::Transport {
        endpoint: endpoint.to_string(),
        attempts: max_attempts,
        message: last_failure,
    })
}

/// Lists the model names an endpoint advertises, sorted.
pub fn list_remote_models(
    endpoint: &str,
    config: &AdapterConfig,
) -> Result<Vec<String>, AdapterError> {
    let client = client(config)?;
    let response = apply_bearer(client.get(models_url(endpoint)), config)
        .send()
        .map_err(|e| AdapterError::Transport {
            endpoint: endpoint.to_string(),
            attempts: 1,
            message: e.to_string(),
        })?;
    let status = response.status();
    let body = response.text().unwrap_or_default();
    if !status.is_success() {
        let message = serde_json::from_str::<RemoteErrorBody>(&body)
            .map(|b| b.error)
            .unwrap_or(body);
        return Err(AdapterError::Remote {
            endpoint: endpoint.to_string(),
            status: status.as_u16(),
            message,
        });
    }
    let parsed: ModelsResponse =
        serde_json::from_str(&body).map_err(|e| AdapterError::Protocol {
            endpoint: endpoint.to_string(),
            message: format!("malformed models body: {e}"),
        })?;
    let mut models = parsed.models;
    models.sort();
    Ok(models)
}

/// The wire-level model name is the registry id's suffix after the first
/// slash: "flair/ner-fast" asks the endpoint for model "ner-fast".
pub fn remote_model_name(model_id: &str) -> &str {
    model_id.split_once('/').map(|(_, rest)| rest).unwrap_or(model_id)
}

/// Splits a document into request-sized chunks, cutting at sentence starts
/// wherever possible. Chunks are contiguous and jointly cover the text, so a
/// chunk-local offset plus the chunk's base is a document offset.
fn chunk_boundaries(text: &str, max_text: usize) -> Vec<(usize, usize)> {
    let total = scalar_len(text);
    if total <= max_text {
        return vec![(0, total)];
    }
    let starts: Vec<usize> = split_sentences(text).iter().map(|s| s.start).collect();
    let mut chunks = Vec::new();
    let mut from = 0usize;
    while total - from > max_text {
        let cut = starts
            .iter()
            .copied()
            .filter(|&s| s > from && s - from <= max_text)
            .max()
            // No sentence start in range: an over-long sentence is cut hard.
            .unwrap_or(from + max_text);
        chunks.push((from, cut));
        from = cut;
    }
    chunks.push((from, total));
    chunks
}

/// Runs one external model over a document: annotate each chunk, re-base
/// offsets, validate every span against the document (mismatches are dropped
/// and counted, never repaired), normalize labels, attach context. Transport
/// and protocol failures come back as an error-bearing result.
pub fn run_external_backend(
    desc: &ModelDescriptor,
    doc: &DocumentRecord,
    policy: ContextPolicy,
    strict_labels: bool,
    config: &AdapterConfig,
) -> ModelRunResult {
    let started = Instant::now();
    if desc.kind != ModelKind::External {
        return ModelRunResult::failed(
            &desc.model_id,
            started.elapsed().as_secs_f64(),
            format!("{} is not an external model", desc.model_id),
        );
    }
    let Some(endpoint) = desc.endpoint.as_deref() else {
        return ModelRunResult::failed(
            &desc.model_id,
            started.elapsed().as_secs_f64(),
            format!("{} has no endpoint configured", desc.model_id),
        );
    };

    let chars: Vec<char> = doc.text.chars().collect();
    let model = remote_model_name(&desc.model_id).to_string();
    let mut raw: Vec<AnnotateEntity> = Vec::new();
    for (from, to) in chunk_boundaries(&doc.text, config.max_text) {
        let request = AnnotateRequest {
            model: model.clone(),
            text: chars[from..to].iter().collect(),
        };
        match http_annotate(endpoint, &request, config) {
            Ok((response, _attempts)) => {
                raw.extend(response.entities.into_iter().map(|mut e| {
                    e.start += from;
                    e.end += from;
                    e
                }));
            }
            Err(e) => {
                return ModelRunResult::failed(
                    &desc.model_id,
                    started.elapsed().as_secs_f64(),
                    e.to_string(),
                );
            }
        }
    }

    let builder = ContextBuilder::new(&doc.text, policy);
    let mut entities = Vec::new();
    let mut dropped = 0u64;
    for entity in raw {
        if scalar_slice(&doc.text, entity.start, entity.end).as_deref()
            != Some(entity.surface.as_str())
        {
            log::debug!(
                "{}: dropped span ({}, {}) {:?}: does not match the document",
                desc.model_id,
                entity.start,
                entity.end,
                entity.surface
            );
            dropped += 1;
            continue;
        }
        let category = match normalize_category(&entity.label, &desc.alias_map, strict_labels)
        {
            Ok(category) => category,
            Err(e) => {
                return ModelRunResult::failed(
                    &desc.model_id,
                    started.elapsed().as_secs_f64(),
                    e.to_string(),
                );
            }
        };
        let context = match builder.context(entity.start, entity.end) {
            Ok(context) => context,
            Err(_) => {
                dropped += 1;
                continue;
            }
        };
        let mention = EntityMention {
            surface: entity.surface,
            category,
            start: entity.start,
            end: entity.end,
            context,
            score: entity.score,
            model_id: desc.model_id.clone(),
        };
        if validate_mention(&mention, &doc.text).is_err() {
            dropped += 1;
            continue;
        }
        entities.push(mention);
    }
    entities.sort_by_key(|m| (m.start, m.end));

    ModelRunResult {
        model_id: desc.model_id.clone(),
        exec_time_s: started.elapsed().as_secs_f64(),
        entities,
        error: None,
        dropped_spans: dropped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};

    // A one-shot HTTP mock: canned responses served in order, requests
    // recorded. Plain HTTP/1.1 over a loopback listener.
    struct Mock {
        addr: String,
        requests: Arc<Mutex<Vec<(String, String, Vec<(String, String)>)>>>,
        handle: Option<std::thread::JoinHandle<()>>,
    }

    fn read_request(stream: &mut std::net::TcpStream) -> (String, String, Vec<(String, String)>) {
        let mut reader = BufReader::new(stream.try_clone().expect("clone stream"));
        let mut request_line = String::new();
        reader.read_line(&mut request_line).expect("request line");
        let mut headers = Vec::new();
        let mut content_length = 0usize;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).expect("header line");
            let line = line.trim_end().to_string();
            if line.is_empty() {
                break;
            }
            if let Some((name, value)) = line.split_once(':') {
                let name = name.trim().to_ascii_lowercase();
                let value = value.trim().to_string();
                if name == "content-length" {
                    content_length = value.parse().unwrap_or(0);
                }
                headers.push((name, value));
            }
        }
        let mut body = vec![0u8; content_length];
        reader.read_exact(&mut body).expect("body");
        (
            request_line.trim_end().to_string(),
            String::from_utf8_lossy(&body).into_owned(),
            headers,
        )
    }

    fn respond(stream: &mut std::net::TcpStream, status: u16, body: &str) {
        let reason = match status {
            200 => "OK",
            400 => "Bad Request",
            500 => "Internal Server Error",
            _ => "Status",
        };
        let response = format!(
            "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        );
        stream.write_all(response.as_bytes()).expect("write response");
    }

    impl Mock {
        /// Serves the canned (status, body) list, one per connection.
        fn serve(responses: Vec<(u16, String)>) -> Mock {
            let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
            let addr = format!("http://{}", listener.local_addr().expect("addr"));
            let requests = Arc::new(Mutex::new(Vec::new()));
            let seen = Arc::clone(&requests);
            let handle = std::thread::spawn(move || {
                for canned in responses {
                    let (mut stream, _) = listener.accept().expect("accept");
                    let request = read_request(&mut stream);
                    seen.lock().expect("requests lock").push(request);
                    respond(&mut stream, canned.0, &canned.1);
                }
            });
            Mock {
                addr,
                requests,
                handle: Some(handle),
            }
        }

        fn finish(mut self) -> Vec<(String, String, Vec<(String, String)>)> {
            self.handle.take().expect("handle").join().expect("mock thread");
            let requests = self.requests.lock().expect("requests lock");
            requests.clone()
        }
    }

    fn fast_config() -> AdapterConfig {
        AdapterConfig {
            timeout: Duration::from_secs(5),
            backoff_base: Duration::from_millis(1),
            max_in_flight: 4,
            ..AdapterConfig::default()
        }
    }

    fn entity_json(surface: &str, label: &str, start: usize, end: usize) -> String {
        format!(r#"{{"surface":"{surface}","label":"{label}","start":{start},"end":{end}}}"#)
    }

    #[test]
    fn annotate_round_trip() {
        let body = format!(r#"{{"entities":[{}]}}"#, entity_json("Canberra", "LOC", 0, 8));
        let mock = Mock::serve(vec![(200, body)]);
        let request = AnnotateRequest {
            model: "default".to_string(),
            text: "Canberra is cold".to_string(),
        };
        let (response, attempts) = http_annotate(&mock.addr, &request, &fast_config()).unwrap();
        assert_eq!(attempts, 1);
        assert_eq!(
            response.entities,
            vec![AnnotateEntity {
                surface: "Canberra".to_string(),
                label: "LOC".to_string(),
                start: 0,
                end: 8,
                score: None,
            }]
        );
        let requests = mock.finish();
        assert_eq!(requests.len(), 1);
        assert!(requests[0].0.starts_with("POST /annotate"));
        let sent: AnnotateRequest = serde_json::from_str(&requests[0].1).unwrap();
        assert_eq!(sent, request);
    }

    #[test]
    fn malformed_body_is_protocol_error() {
        let mock = Mock::serve(vec![(200, "not json at all".to_string())]);
        let request = AnnotateRequest {
            model: "m".to_string(),
            text: "x".to_string(),
        };
        let err = http_annotate(&mock.addr, &request, &fast_config()).unwrap_err();
        assert!(matches!(err, AdapterError::Protocol { .. }), "{err}");
        mock.finish();
    }

    #[test]
    fn transient_failures_are_retried() {
        let ok = r#"{"entities":[]}"#.to_string();
        let mock = Mock::serve(vec![
            (500, r#"{"error":"busy"}"#.to_string()),
            (500, r#"{"error":"busy"}"#.to_string()),
            (200, ok),
        ]);
        let request = AnnotateRequest {
            model: "m".to_string(),
            text: "x".to_string(),
        };
        let (_, attempts) = http_annotate(&mock.addr, &request, &fast_config()).unwrap();
        assert_eq!(attempts, 3);
        assert_eq!(mock.finish().len(), 3);
    }

    #[test]
    fn retries_exhaust_into_transport_error() {
        let failures: Vec<(u16, String)> =
            (0..4).map(|_| (500, r#"{"error":"down"}"#.to_string())).collect();
        let mock = Mock::serve(failures);
        let request = AnnotateRequest {
            model: "m".to_string(),
            text: "x".to_string(),
        };
        let err = http_annotate(&mock.addr, &request, &fast_config()).unwrap_err();
        match err {
            AdapterError::Transport { attempts, message, .. } => {
                assert_eq!(attempts, 4);
                assert!(message.contains("500"), "{message}");
            }
            other => panic!("expected transport error, got {other}"),
        }
        mock.finish();
    }

    #[test]
    fn client_errors_are_not_retried() {
        let mock = Mock::serve(vec![(400, r#"{"error":"unknown model"}"#.to_string())]);
        let request = AnnotateRequest {
            model: "nope".to_string(),
            text: "x".to_string(),
        };
        let err = http_annotate(&mock.addr, &request, &fast_config()).unwrap_err();
        match err {
            AdapterError::Remote { status, message, .. } => {
                assert_eq!(status, 400);
                assert_eq!(message, "unknown model");
            }
            other => panic!("expected remote error, got {other}"),
        }
        assert_eq!(mock.finish().len(), 1);
    }

    #[test]
    fn oversize_requests_are_rejected_locally() {
        let config = AdapterConfig {
            max_text: 4,
            ..fast_config()
        };
        let request = AnnotateRequest {
            model: "m".to_string(),
            text: "hello".to_string(),
        };
        let err = http_annotate("http://127.0.0.1:1", &request, &config).unwrap_err();
        assert!(matches!(err, AdapterError::TooLarge { length: 5, max: 4 }));
    }

    #[test]
    fn bearer_token_is_sent() {
        let mock = Mock::serve(vec![(200, r#"{"entities":[]}"#.to_string())]);
        let config = AdapterConfig {
            bearer: Some("sesame".to_string()),
            ..fast_config()
        };
        let request = AnnotateRequest {
            model: "m".to_string(),
            text: "x".to_string(),
        };
        http_annotate(&mock.addr, &request, &config).unwrap();
        let requests = mock.finish();
        assert!(requests[0]
            .2
            .iter()
            .any(|(name, value)| name == "authorization" && value == "Bearer sesame"));
    }

    #[test]
    fn models_listing_is_sorted() {
        let mock = Mock::serve(vec![(200, r#"{"models":["ner-fast","ner"]}"#.to_string())]);
        let models = list_remote_models(&mock.addr, &fast_config()).unwrap();
        assert_eq!(models, vec!["ner".to_string(), "ner-fast".to_string()]);
        let requests = mock.finish();
        assert!(requests[0].0.starts_with("GET /models"));
    }

    #[test]
    fn empty_models_listing() {
        let mock = Mock::serve(vec![(200, r#"{"models":[]}"#.to_string())]);
        assert!(list_remote_models(&mock.addr, &fast_config()).unwrap().is_empty());
        mock.finish();
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        // TEST-NET-1 address: connections fail fast.
        let err = list_remote_models("http://127.0.0.1:1", &fast_config()).unwrap_err();
        assert!(matches!(err, AdapterError::Transport { .. }));
    }

    #[test]
    fn remote_model_names_drop_the_registry_prefix() {
        assert_eq!(remote_model_name("flair/ner-fast"), "ner-fast");
        assert_eq!(remote_model_name("nltk/default"), "default");
        assert_eq!(remote_model_name("bare"), "bare");
        assert_eq!(remote_model_name("a/b/c"), "b/c");
    }

    fn external_desc(endpoint: &str) -> ModelDescriptor {
        let mut desc = ModelDescriptor::external("nltk/default");
        desc.endpoint = Some(endpoint.to_string());
        desc.enabled = true;
        desc
    }

    fn doc(text: &str) -> DocumentRecord {
        DocumentRecord {
            doc_id: "d".to_string(),
            source_uri: "d".to_string(),
            text: text.to_string(),
            metadata: BTreeMap::new(),
            content_hash: crate::ingest::content_hash(text),
        }
    }

    #[test]
    fn external_backend_normalizes_and_validates() {
        let body = format!(
            r#"{{"entities":[{},{},{}]}}"#,
            entity_json("Canberra", "LOC", 0, 8),
            // Span does not match the text: dropped.
            entity_json("XYZ", "ORG", 3, 6),
            // Out-of-range score: dropped.
            r#"{"surface":"cold","label":"MISC","start":12,"end":16,"score":1.5}"#,
        );
        let mock = Mock::serve(vec![(200, body)]);
        let result = run_external_backend(
            &external_desc(&mock.addr),
            &doc("Canberra is cold"),
            ContextPolicy::Sentence,
            false,
            &fast_config(),
        );
        assert!(result.error.is_none(), "{:?}", result.error);
        assert_eq!(result.entities.len(), 1);
        assert_eq!(result.dropped_spans, 2);
        let mention = &result.entities[0];
        assert_eq!(mention.category, crate::model::Category::Location);
        assert_eq!(mention.context, "Canberra is cold");
        assert_eq!(mention.model_id, "nltk/default");
        validate_mention(mention, "Canberra is cold").unwrap();
        mock.finish();
    }

    #[test]
    fn external_backend_captures_transport_failure() {
        let desc = external_desc("http://127.0.0.1:1");
        let config = AdapterConfig {
            retries: 0,
            ..fast_config()
        };
        let result = run_external_backend(
            &desc,
            &doc("text"),
            ContextPolicy::Sentence,
            false,
            &config,
        );
        let error = result.error.expect("failure recorded");
        assert!(error.contains("transport failure"), "{error}");
        assert!(result.entities.is_empty());
    }

    #[test]
    fn external_backend_strict_labels_fail_on_unknown() {
        let body = format!(r#"{{"entities":[{}]}}"#, entity_json("Canberra", "CITYLIKE", 0, 8));
        let mock = Mock::serve(vec![(200, body)]);
        let result = run_external_backend(
            &external_desc(&mock.addr),
            &doc("Canberra is cold"),
            ContextPolicy::Sentence,
            true,
            &fast_config(),
        );
        let error = result.error.expect("strict normalization failure");
        assert!(error.contains("CITYLIKE"), "{error}");
        mock.finish();
    }

    #[test]
    fn missing_endpoint_is_a_captured_failure() {
        let mut desc = ModelDescriptor::external("nltk/default");
        desc.enabled = true;
        desc.endpoint = None;
        let result = run_external_backend(
            &desc,
            &doc("text"),
            ContextPolicy::Sentence,
            false,
            &fast_config(),
        );
        assert!(result.error.expect("no endpoint").contains("endpoint"));
    }

    #[test]
    fn chunk_boundaries_cover_the_text_contiguously() {
        let text = "One sentence here. Another one now. A third follows. Tail";
        let total = scalar_len(text);
        for max in [10, 20, 25, 60, 1000] {
            let chunks = chunk_boundaries(text, max);
            assert_eq!(chunks.first().unwrap().0, 0);
            assert_eq!(chunks.last().unwrap().1, total);
            for pair in chunks.windows(2) {
                assert_eq!(pair[0].1, pair[1].0, "gap under max={max}");
            }
            for &(from, to) in &chunks {
                assert!(to > from);
                if max >= 20 {
                    // Sentence cuts keep chunks within the cap. Only the
                    // hard-cut fallback can exceed it, and these sentences
                    // are shorter than 20 scalars.
                    assert!(to - from <= max, "oversized chunk under max={max}");
                }
            }
        }
    }

    #[test]
    fn chunked_annotation_rebases_offsets() {
        // The mock finds "Canberra" in whatever chunk text it receives, so
        // document-level offsets only come out right if re-basing works.
        let text = "Canberra first here. Middle filler text. Canberra again late.";
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
        let addr = format!("http://{}", listener.local_addr().expect("addr"));
        let handle = std::thread::spawn(move || {
            for _ in 0..3 {
                let (mut stream, _) = listener.accept().expect("accept");
                let (_, body, _) = read_request(&mut stream);
                let request: AnnotateRequest = serde_json::from_str(&body).expect("request");
                let chars: Vec<char> = request.text.chars().collect();
                let needle: Vec<char> = "Canberra".chars().collect();
                let mut entities = Vec::new();
                for start in 0..chars.len().saturating_sub(needle.len() - 1) {
                    if chars[start..start + needle.len()] == needle[..] {
                        entities.push(AnnotateEntity {
                            surface: "Canberra".to_string(),
                            label: "GPE".to_string(),
                            start,
                            end: start + needle.len(),
                            score: Some(0.9),
                        });
                    }
                }
                let body = serde_json::to_string(&AnnotateResponse { entities }).unwrap();
                respond(&mut stream, 200, &body);
            }
        });

        let mut desc = ModelDescriptor::external("nltk/default");
        desc.endpoint = Some(addr);
        desc.enabled = true;
        let config = AdapterConfig {
            max_text: 25,
            ..fast_config()
        };
        let result = run_external_backend(
            &desc,
            &doc(text),
            ContextPolicy::Sentence,
            false,
            &config,
        );
        handle.join().expect("mock thread");
        assert!(result.error.is_none(), "{:?}", result.error);
        assert_eq!(result.dropped_spans, 0);
        let spans: Vec<(usize, usize)> =
            result.entities.iter().map(|m| (m.start, m.end)).collect();
        assert_eq!(spans, vec![(0, 8), (41, 49)]);
        for mention in &result.entities {
            validate_mention(mention, text).unwrap();
        }
    }

    #[test]
    fn per_endpoint_in_flight_cap_holds() {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
        let addr = format!("http://{}", listener.local_addr().expect("addr"));
        let current = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let (current_server, peak_server) = (Arc::clone(&current), Arc::clone(&peak));
        let handle = std::thread::spawn(move || {
            let mut workers = Vec::new();
            for _ in 0..8 {
                let (mut stream, _) = listener.accept().expect("accept");
                let current = Arc::clone(&current_server);
                let peak = Arc::clone(&peak_server);
                workers.push(std::thread::spawn(move || {
                    let _ = read_request(&mut stream);
                    let now = current.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(40));
                    current.fetch_sub(1, Ordering::SeqCst);
                    respond(&mut stream, 200, r#"{"entities":[]}"#);
                }));
            }
            for worker in workers {
                worker.join().expect("mock worker");
            }
        });

        let config = AdapterConfig {
            max_in_flight: 3,
            ..fast_config()
        };
        let mut clients = Vec::new();
        for _ in 0..8 {
            let addr = addr.clone();
            let config = config.clone();
            clients.push(std::thread::spawn(move || {
                let request = AnnotateRequest {
                    model: "m".to_string(),
                    text: "x".to_string(),
                };
                http_annotate(&addr, &request, &config).unwrap();
            }));
        }
        for client in clients {
            client.join().expect("client thread");
        }
        handle.join().expect("mock thread");
        assert!(peak.load(Ordering::SeqCst) <= 3, "peak {}", peak.load(Ordering::SeqCst));
    }
}
