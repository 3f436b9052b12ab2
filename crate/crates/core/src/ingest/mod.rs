//! Document acquisition: plain files, extracted-content records, and the
//! document-store client.

pub mod store;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// A document ready for processing. `text` is the normalized source content;
/// offsets in mentions refer to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub doc_id: String,
    pub source_uri: String,
    pub text: String,
    pub metadata: BTreeMap<String, String>,
    pub content_hash: String,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not valid UTF-8")]
    Decode { path: PathBuf },
    #[error("cannot parse {path} as an extracted record: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("extracted record {path} has no content, text, or body field")]
    MissingContent { path: PathBuf },
}

/// Normalizes CRLF and lone CR line endings to LF.
pub fn normalize_line_endings(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\r' {
            if chars.peek() == Some(&'\n') {
                chars.next();
            }
            out.push('\n');
        } else {
            out.push(c);
        }
    }
    out
}

/// Hex SHA-256 of the document text; recorded so a result can be tied back
/// to the exact content it was computed from.
pub fn content_hash(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Turns a (relative) path into a document id: separators become ":".
pub fn doc_id_from_path(path: &Path) -> String {
    let display = path.to_string_lossy();
    display.replace(['/', '\\'], ":")
}

/// Loads one plain UTF-8 text file. The doc id is derived from the path as
/// given, so callers pass paths relative to their corpus root when they want
/// root-independent ids.
pub fn load_plain_text(path: &Path) -> Result<DocumentRecord, IngestError> {
    let bytes = std::fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let raw = String::from_utf8(bytes).map_err(|_| IngestError::Decode {
        path: path.to_path_buf(),
    })?;
    let text = normalize_line_endings(&raw);
    let mut metadata = BTreeMap::new();
    metadata.insert("format".to_string(), "text".to_string());
    Ok(DocumentRecord {
        doc_id: doc_id_from_path(path),
        source_uri: path.to_string_lossy().into_owned(),
        content_hash: content_hash(&text),
        text,
        metadata,
    })
}

/// Pulls text and metadata out of a parsed extracted-content object.
/// Shared between the file loader and the store client.
pub(crate) fn record_from_value(
    value: &serde_json::Value,
    fallback_id: &str,
    source_uri: &str,
) -> Option<DocumentRecord> {
    let object = value.as_object()?;
    let mut text = None;
    for key in ["content", "text", "body"] {
        if let Some(serde_json::Value::String(s)) = object.get(key) {
            text = Some((key, s.clone()));
            break;
        }
    }
    let (text_key, raw_text) = text?;
    let doc_id = match object.get("id") {
        Some(serde_json::Value::String(s)) => s.clone(),
        _ => fallback_id.to_string(),
    };
    let mut metadata = BTreeMap::new();
    for (key, field) in object {
        if key == "id" || key == text_key || key.starts_with('_') {
            continue;
        }
        let rendered = match field {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::Bool(b) => b.to_string(),
            _ => continue,
        };
        metadata.insert(key.clone(), rendered);
    }
    let text = normalize_line_endings(&raw_text);
    Some(DocumentRecord {
        doc_id,
        source_uri: source_uri.to_string(),
        content_hash: content_hash(&text),
        text,
        metadata,
    })
}

/// Loads one extracted-content record (a JSON object). Text comes from the
/// first present key among "content", "text", "body"; the doc id from the
/// "id" field, falling back to the file name.
pub fn load_extracted_record(path: &Path) -> Result<DocumentRecord, IngestError> {
    let bytes = std::fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let raw = String::from_utf8(bytes).map_err(|_| IngestError::Decode {
        path: path.to_path_buf(),
    })?;
    let value: serde_json::Value =
        serde_json::from_str(&raw).map_err(|source| IngestError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
    let fallback_id = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned());
    record_from_value(&value, &fallback_id, &path.to_string_lossy())
        .ok_or_else(|| IngestError::MissingContent {
            path: path.to_path_buf(),
        })
}

/// Recursively lists files under `root` whose extension is in `extensions`
/// (compared case-insensitively, without the dot), sorted lexicographically
/// so run order is deterministic.
pub fn scan_input(root: &Path, extensions: &[&str]) -> Result<Vec<PathBuf>, IngestError> {
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(root) {
        let entry = entry.map_err(|e| IngestError::Io {
            path: e.path().map(Path::to_path_buf).unwrap_or_else(|| root.to_path_buf()),
            source: e
                .into_io_error()
                .unwrap_or_else(|| std::io::Error::other("walk error")),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let matches = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| extensions.iter().any(|want| want.eq_ignore_ascii_case(e)))
            .unwrap_or(false);
        if matches {
            files.push(entry.path().to_path_buf());
        }
    }
    files.sort_by(|a, b| a.to_string_lossy().cmp(&b.to_string_lossy()));
    Ok(files)
}
