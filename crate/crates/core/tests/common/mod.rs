//! HTTP test doubles for the acceptance suite: a scripted server that plays
//! back canned responses, and an in-memory document store speaking the
//! revision-checked PUT/GET/_all_docs dialect the store client expects.
//! Both implement just enough HTTP/1.1 for a blocking client; every
//! connection carries exactly one request and is closed after the response.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::{json, Value};

/// One request as the server saw it.
#[derive(Debug, Clone)]
pub struct ReceivedRequest {
    pub method: String,
    pub path: String,
    pub body: String,
}

fn read_request(stream: &mut TcpStream) -> Option<ReceivedRequest> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();

    let mut content_length = 0usize;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header).ok()?;
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().unwrap_or(0);
            }
        }
    }

    let mut body = vec![0u8; content_length];
    if content_length > 0 {
        reader.read_exact(&mut body).ok()?;
    }
    Some(ReceivedRequest {
        method,
        path,
        body: String::from_utf8_lossy(&body).into_owned(),
    })
}

fn write_response(stream: &mut TcpStream, status: u16, body: &str) {
    let reason = match status {
        200 => "OK",
        201 => "Created",
        400 => "Bad Request",
        404 => "Not Found",
        405 => "Method Not Allowed",
        409 => "Conflict",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "OK",
    };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(response.as_bytes());
    let _ = stream.flush();
}

/// Plays back a fixed (status, body) script, one connection per entry, then
/// stops listening. `finish()` joins the server and returns every request
/// it saw, in order.
pub struct ScriptedServer {
    pub base_url: String,
    handle: Option<JoinHandle<Vec<ReceivedRequest>>>,
}

impl ScriptedServer {
    pub fn start(script: Vec<(u16, String)>) -> ScriptedServer {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind scripted server");
        let base_url = format!("http://{}", listener.local_addr().expect("local addr"));
        let handle = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in script {
                let Ok((mut stream, _)) = listener.accept() else {
                    break;
                };
                if let Some(request) = read_request(&mut stream) {
                    seen.push(request);
                    write_response(&mut stream, status, &body);
                }
            }
            seen
        });
        ScriptedServer {
            base_url,
            handle: Some(handle),
        }
    }

    /// Waits for the script to be fully consumed and returns the requests.
    pub fn finish(mut self) -> Vec<ReceivedRequest> {
        self.handle
            .take()
            .expect("script not yet consumed")
            .join()
            .expect("scripted server thread")
    }
}

/// Documents held by the store mock: id → (revision counter, payload with
/// any `_id`/`_rev` bookkeeping stripped).
type Stored = BTreeMap<String, (u64, Value)>;

/// In-memory document store. Revisions are `"{n}-mock"`; a PUT must carry
/// the current revision to update (and none to create), anything else is a
/// 409 conflict. GET returns the payload with `_id`/`_rev` added and
/// `GET /{db}/_all_docs` lists ids.
pub struct StoreMock {
    pub base_url: String,
    addr: std::net::SocketAddr,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl StoreMock {
    pub fn start(database: &str) -> StoreMock {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind store mock");
        let addr = listener.local_addr().expect("local addr");
        let base_url = format!("http://{addr}");
        let shutdown = Arc::new(AtomicBool::new(false));
        let state: Arc<Mutex<Stored>> = Arc::new(Mutex::new(BTreeMap::new()));
        let database = database.to_string();
        let stop = Arc::clone(&shutdown);
        let handle = std::thread::spawn(move || loop {
            let Ok((mut stream, _)) = listener.accept() else {
                break;
            };
            if stop.load(Ordering::SeqCst) {
                break;
            }
            if let Some(request) = read_request(&mut stream) {
                let (status, body) = handle_store_request(&state, &database, &request);
                write_response(&mut stream, status, &body);
            }
        });
        StoreMock {
            base_url,
            addr,
            shutdown,
            handle: Some(handle),
        }
    }
}

impl Drop for StoreMock {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // Wake the accept loop so it observes the flag.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn handle_store_request(
    state: &Mutex<Stored>,
    database: &str,
    request: &ReceivedRequest,
) -> (u16, String) {
    let prefix = format!("/{database}/");
    let Some(rest) = request.path.strip_prefix(&prefix) else {
        return (404, json!({"error": "not_found", "reason": "no_db_file"}).to_string());
    };

    if rest == "_all_docs" {
        if request.method != "GET" {
            return (405, json!({"error": "method_not_allowed"}).to_string());
        }
        let docs = state.lock().expect("store mock state");
        let rows: Vec<Value> = docs.keys().map(|id| json!({"id": id, "key": id})).collect();
        return (
            200,
            json!({"total_rows": rows.len(), "offset": 0, "rows": rows}).to_string(),
        );
    }

    let id = percent_decode(rest);
    match request.method.as_str() {
        "GET" => {
            let docs = state.lock().expect("store mock state");
            match docs.get(&id) {
                Some((rev, payload)) => {
                    let mut body = payload.clone();
                    if let Some(object) = body.as_object_mut() {
                        object.insert("_id".to_string(), json!(id));
                        object.insert("_rev".to_string(), json!(format!("{rev}-mock")));
                    }
                    (200, body.to_string())
                }
                None => (404, json!({"error": "not_found", "reason": "missing"}).to_string()),
            }
        }
        "PUT" => {
            let Ok(mut payload) = serde_json::from_str::<Value>(&request.body) else {
                return (400, json!({"error": "bad_request", "reason": "invalid json"}).to_string());
            };
            if !payload.is_object() {
                return (400, json!({"error": "bad_request", "reason": "not an object"}).to_string());
            }
            let supplied = payload
                .get("_rev")
                .and_then(|v| v.as_str())
                .map(str::to_string);
            if let Some(object) = payload.as_object_mut() {
                object.remove("_rev");
                object.remove("_id");
            }
            let mut docs = state.lock().expect("store mock state");
            let current = docs.get(&id).map(|(rev, _)| *rev);
            let next = match (current, supplied) {
                (None, None) => 1,
                (Some(rev), Some(supplied)) if supplied == format!("{rev}-mock") => rev + 1,
                _ => {
                    return (
                        409,
                        json!({"error": "conflict", "reason": "Document update conflict."})
                            .to_string(),
                    )
                }
            };
            docs.insert(id.clone(), (next, payload));
            (
                201,
                json!({"ok": true, "id": id, "rev": format!("{next}-mock")}).to_string(),
            )
        }
        _ => (405, json!({"error": "method_not_allowed"}).to_string()),
    }
}

fn percent_decode(raw: &str) -> String {
    let bytes = raw.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            let hex = std::str::from_utf8(&bytes[i + 1..i + 3]).unwrap_or("");
            if let Ok(byte) = u8::from_str_radix(hex, 16) {
                out.push(byte);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8(out).unwrap_or_else(|_| raw.to_string())
}
