//! Minimal programmable HTTP server speaking just enough of the chat
//! protocol for conformance tests, plus shared fixture builders.

#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;

use wsgully_core::data::{DatasetManifest, ImageRef, LocationId, LocationRecord};

/// What the mock should do with one `/api/chat` request.
#[derive(Clone)]
pub enum MockReply {
    /// Reply 200 with this assistant message content.
    Content(String),
    /// Reply with this bare status code.
    Status(u16),
    /// Sleep, then reply 200; used to trip client timeouts.
    Hang(Duration, String),
}

type Handler = dyn Fn(&serde_json::Value) -> MockReply + Send + Sync;

pub struct MockServer {
    pub base_url: String,
    pub chat_requests: Arc<AtomicUsize>,
    pub bodies: Arc<Mutex<Vec<serde_json::Value>>>,
    shutdown: Arc<AtomicBool>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl MockServer {
    pub fn start(handler: impl Fn(&serde_json::Value) -> MockReply + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock server");
        let addr = listener.local_addr().expect("mock addr");
        listener.set_nonblocking(true).expect("nonblocking");
        let shutdown = Arc::new(AtomicBool::new(false));
        let chat_requests = Arc::new(AtomicUsize::new(0));
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);

        let thread = {
            let shutdown = Arc::clone(&shutdown);
            let chat_requests = Arc::clone(&chat_requests);
            let bodies = Arc::clone(&bodies);
            std::thread::spawn(move || {
                while !shutdown.load(Ordering::Relaxed) {
                    match listener.accept() {
                        Ok((stream, _)) => {
                            let handler = Arc::clone(&handler);
                            let chat_requests = Arc::clone(&chat_requests);
                            let bodies = Arc::clone(&bodies);
                            std::thread::spawn(move || {
                                let _ = serve(stream, &handler, &chat_requests, &bodies);
                            });
                        }
                        Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                            std::thread::sleep(Duration::from_millis(2));
                        }
                        Err(_) => break,
                    }
                }
            })
        };

        MockServer {
            base_url: format!("http://{addr}"),
            chat_requests,
            bodies,
            shutdown,
            thread: Some(thread),
        }
    }

    pub fn chat_count(&self) -> usize {
        self.chat_requests.load(Ordering::Relaxed)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

fn serve(
    mut stream: TcpStream,
    handler: &Arc<Handler>,
    chat_requests: &AtomicUsize,
    bodies: &Mutex<Vec<serde_json::Value>>,
) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(30)))?;
    let mut buffer = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            return Ok(());
        }
        buffer.extend_from_slice(&chunk[..n]);
        if let Some(pos) = find_header_end(&buffer) {
            break pos;
        }
    };
    let head = String::from_utf8_lossy(&buffer[..header_end]).to_string();
    let mut lines = head.lines();
    let request_line = lines.next().unwrap_or_default().to_string();
    let content_length = lines
        .filter_map(|line| {
            let (name, value) = line.split_once(':')?;
            name.eq_ignore_ascii_case("content-length")
                .then(|| value.trim().parse::<usize>().ok())?
        })
        .next()
        .unwrap_or(0);

    let body_start = header_end + 4;
    while buffer.len() < body_start + content_length {
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            break;
        }
        buffer.extend_from_slice(&chunk[..n]);
    }
    let body = &buffer[body_start..(body_start + content_length).min(buffer.len())];

    if request_line.starts_with("POST /api/chat") {
        chat_requests.fetch_add(1, Ordering::Relaxed);
        let parsed: serde_json::Value = serde_json::from_slice(body).unwrap_or_default();
        bodies.lock().expect("bodies").push(parsed.clone());
        match handler(&parsed) {
            MockReply::Content(content) => {
                let payload = serde_json::json!({
                    "model": "mock",
                    "message": {"role": "assistant", "content": content},
                    "done": true
                })
                .to_string();
                write_response(&mut stream, 200, &payload)
            }
            MockReply::Status(code) => write_response(&mut stream, code, "{}"),
            MockReply::Hang(duration, content) => {
                std::thread::sleep(duration);
                let payload = serde_json::json!({
                    "model": "mock",
                    "message": {"role": "assistant", "content": content},
                    "done": true
                })
                .to_string();
                write_response(&mut stream, 200, &payload)
            }
        }
    } else {
        write_response(&mut stream, 200, "\"ok\"")
    }
}

fn find_header_end(buffer: &[u8]) -> Option<usize> {
    buffer.windows(4).position(|w| w == b"\r\n\r\n")
}

fn write_response(stream: &mut TcpStream, code: u16, body: &str) -> std::io::Result<()> {
    let reason = match code {
        200 => "OK",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    };
    write!(
        stream,
        "HTTP/1.1 {code} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    stream.flush()
}

/// First image of the first message, decoded; tests store the location id as
/// the image payload so the mock can key behavior on it.
pub fn location_of(body: &serde_json::Value) -> Option<String> {
    let first = body["messages"][0]["images"][0].as_str()?;
    let bytes = BASE64.decode(first).ok()?;
    String::from_utf8(bytes).ok()
}

pub fn question_of(body: &serde_json::Value) -> String {
    body["messages"][0]["content"]
        .as_str()
        .unwrap_or_default()
        .to_string()
}

/// Writes `k` tiny image files (content = location id) under `dir` and
/// returns a manifest pointing at them, `images_per_location` images each.
pub fn disk_manifest(dir: &std::path::Path, k: usize, images: usize) -> DatasetManifest {
    let records = (0..k)
        .map(|i| {
            let id = format!("loc{i:03}");
            let image_refs = (0..images)
                .map(|n| {
                    let path = dir.join(format!("{id}_{n}.img"));
                    std::fs::write(&path, id.as_bytes()).expect("write stub image");
                    ImageRef {
                        path: path.to_string_lossy().into_owned(),
                        gsd_cm: 100.0,
                        year: 2015 + n as i32,
                    }
                })
                .collect();
            LocationRecord {
                location_id: LocationId::new(id).unwrap(),
                images: image_refs,
            }
        })
        .collect();
    DatasetManifest::new(records).unwrap()
}

/// Endpoint config tuned for tests: short timeouts, no backoff waits.
pub fn fast_endpoint(base_url: &str) -> wsgully_core::lf::VlmEndpointConfig {
    let mut config = wsgully_core::lf::VlmEndpointConfig::new(base_url);
    config.request_timeout_s = 0.25;
    config.max_retries = 1;
    config.backoff_base_s = 0.01;
    config
}
