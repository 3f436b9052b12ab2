//! Minimal client for a CouchDB-compatible document store.
//!
//! Only the subset the pipeline needs: fetch a document, put a document
//! (with revision handling), and list ids.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{record_from_value, DocumentRecord};

/// Basic-auth credentials for the store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreCredentials {
    pub user: String,
    pub secret: String,
}

/// How to reach one database on a store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreConnection {
    /// Server base URL, http or https, without the database segment.
    pub base_url: String,
    pub database: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credentials: Option<StoreCredentials>,
    /// Per-request timeout in milliseconds.
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    30_000
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid store connection: {0}")]
    BadConnection(String),
    #[error("store request failed: {0}")]
    Transport(String),
    #[error("document {doc_id:?} not found")]
    NotFound { doc_id: String },
    #[error("revision conflict writing {doc_id:?}")]
    Conflict { doc_id: String },
    #[error("cannot parse store response for {doc_id:?}: {message}")]
    Parse { doc_id: String, message: String },
    #[error("store returned status {status} for {doc_id:?}")]
    Unexpected { status: u16, doc_id: String },
}

impl StoreConnection {
    /// Checks the connection invariants: http(s) base URL, positive timeout.
    pub fn validate(&self) -> Result<(), StoreError> {
        let parsed = url::Url::parse(&self.base_url)
            .map_err(|e| StoreError::BadConnection(format!("{}: {e}", self.base_url)))?;
        if !matches!(parsed.scheme(), "http" | "https") {
            return Err(StoreError::BadConnection(format!(
                "{} is not an http(s) URL",
                self.base_url
            )));
        }
        if self.database.is_empty() {
            return Err(StoreError::BadConnection("empty database name".to_string()));
        }
        if self.timeout_ms == 0 {
            return Err(StoreError::BadConnection("timeout must be positive".to_string()));
        }
        Ok(())
    }

    fn client(&self) -> Result<reqwest::blocking::Client, StoreError> {
        reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(self.timeout_ms))
            .build()
            .map_err(|e| StoreError::Transport(e.to_string()))
    }

    fn doc_url(&self, doc_id: &str) -> String {
        format!(
            "{}/{}/{}",
            self.base_url.trim_end_matches('/'),
            self.database,
            encode_id(doc_id)
        )
    }

    fn authorize(
        &self,
        request: reqwest::blocking::RequestBuilder,
    ) -> reqwest::blocking::RequestBuilder {
        match &self.credentials {
            Some(creds) => request.basic_auth(&creds.user, Some(&creds.secret)),
            None => request,
        }
    }
}

/// Percent-encodes a document id for use as one URL path segment. Keeps
/// unreserved characters; everything else (including "/") is escaped.
fn encode_id(doc_id: &str) -> String {
    let mut out = String::with_capacity(doc_id.len());
    for byte in doc_id.bytes() {
        match byte {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(byte as char)
            }
            other => out.push_str(&format!("%{other:02X}")),
        }
    }
    out
}

/// Fetches a document by id and maps it like an extracted-content record.
pub fn store_get(conn: &StoreConnection, doc_id: &str) -> Result<DocumentRecord, StoreError> {
    let value = store_get_raw(conn, doc_id)?;
    let fetched_id = value
        .get("_id")
        .and_then(|v| v.as_str())
        .unwrap_or(doc_id)
        .to_string();
    record_from_value(&value, &fetched_id, &conn.doc_url(doc_id)).ok_or_else(|| {
        StoreError::Parse {
            doc_id: doc_id.to_string(),
            message: "no content, text, or body field".to_string(),
        }
    })
}

/// Fetches a document by id without interpretation.
pub fn store_get_raw(
    conn: &StoreConnection,
    doc_id: &str,
) -> Result<serde_json::Value, StoreError> {
    conn.validate()?;
    let client = conn.client()?;
    let response = conn
        .authorize(client.get(conn.doc_url(doc_id)))
        .send()
        .map_err(|e| StoreError::Transport(e.to_string()))?;
    match response.status().as_u16() {
        200 => response.json().map_err(|e| StoreError::Parse {
            doc_id: doc_id.to_string(),
            message: e.to_string(),
        }),
        404 => Err(StoreError::NotFound {
            doc_id: doc_id.to_string(),
        }),
        status => Err(StoreError::Unexpected {
            status,
            doc_id: doc_id.to_string(),
        }),
    }
}

/// Persists `payload` under `doc_id`, returning the new revision token. The
/// payload must be a JSON object; a "_rev" field inside it updates that
/// revision, its absence creates the document.
pub fn store_put(
    conn: &StoreConnection,
    doc_id: &str,
    payload: &serde_json::Value,
) -> Result<String, StoreError> {
    conn.validate()?;
    let client = conn.client()?;
    let response = conn
        .authorize(client.put(conn.doc_url(doc_id)).json(payload))
        .send()
        .map_err(|e| StoreError::Transport(e.to_string()))?;
    match response.status().as_u16() {
        200 | 201 | 202 => {
            let body: serde_json::Value = response.json().map_err(|e| StoreError::Parse {
                doc_id: doc_id.to_string(),
                message: e.to_string(),
            })?;
            body.get("rev")
                .and_then(|v| v.as_str())
                .map(str::to_string)
                .ok_or_else(|| StoreError::Parse {
                    doc_id: doc_id.to_string(),
                    message: "response has no rev field".to_string(),
                })
        }
        409 => Err(StoreError::Conflict {
            doc_id: doc_id.to_string(),
        }),
        status => Err(StoreError::Unexpected {
            status,
            doc_id: doc_id.to_string(),
        }),
    }
}

/// Persists `payload` under `doc_id`, overwriting any existing revision: on
/// a conflict the current revision is fetched and the write retried once.
pub fn store_upsert(
    conn: &StoreConnection,
    doc_id: &str,
    payload: &serde_json::Value,
) -> Result<String, StoreError> {
    match store_put(conn, doc_id, payload) {
        Err(StoreError::Conflict { .. }) => {
            let current = store_get_raw(conn, doc_id)?;
            let rev = current
                .get("_rev")
                .and_then(|v| v.as_str())
                .ok_or_else(|| StoreError::Parse {
                    doc_id: doc_id.to_string(),
                    message: "existing document has no _rev".to_string(),
                })?;
            let mut updated = payload.clone();
            if let Some(object) = updated.as_object_mut() {
                object.insert("_rev".to_string(), serde_json::Value::String(rev.to_string()));
            }
            store_put(conn, doc_id, &updated)
        }
        other => other,
    }
}

/// Lists every document id in the database, sorted.
pub fn store_list(conn: &StoreConnection) -> Result<Vec<String>, StoreError> {
    conn.validate()?;
    let client = conn.client()?;
    let url = format!(
        "{}/{}/_all_docs",
        conn.base_url.trim_end_matches('/'),
        conn.database
    );
    let response = conn
        .authorize(client.get(url))
        .send()
        .map_err(|e| StoreError::Transport(e.to_string()))?;
    if response.status().as_u16() != 200 {
        return Err(StoreError::Unexpected {
            status: response.status().as_u16(),
            doc_id: "_all_docs".to_string(),
        });
    }
    #[derive(Deserialize)]
    struct Row {
        id: String,
    }
    #[derive(Deserialize)]
    struct AllDocs {
        rows: Vec<Row>,
    }
    let body: AllDocs = response.json().map_err(|e| StoreError::Parse {
        doc_id: "_all_docs".to_string(),
        message: e.to_string(),
    })?;
    let mut ids: Vec<String> = body.rows.into_iter().map(|r| r.id).collect();
    ids.sort_unstable();
    Ok(ids)
}
