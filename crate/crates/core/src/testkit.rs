//! Minimal scripted chat-completions server for exercising the remote
//! client without a network. Test support only; not part of the domain API.
//!
//! The server listens on a loopback port, answers requests according to a
//! fixed script (indexed by arrival order, repeating the last entry), and
//! records request bodies plus the peak number of concurrently in-flight
//! requests.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

/// One scripted reply.
#[derive(Debug, Clone)]
pub enum MockReply {
    /// 200 with the given assistant text.
    Text(String),
    /// 200 echoing the request's first user message content (string form).
    Echo,
    /// A bare status code with an empty JSON body.
    Status(u16),
    /// Sleep, then reply as the inner variant.
    Delayed(Duration, Box<MockReply>),
    /// 200 with a syntactically valid but schema-less JSON body.
    Garbage,
}

#[derive(Default)]
struct ServerState {
    requests: Vec<serde_json::Value>,
    active: usize,
    peak: usize,
}

/// A running mock server; shuts down on drop.
pub struct MockServer {
    addr: std::net::SocketAddr,
    state: Arc<Mutex<ServerState>>,
    served: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    accept_handle: Option<std::thread::JoinHandle<()>>,
}

impl MockServer {
    /// Starts the server with a reply script. Requests past the end of the
    /// script repeat the final entry.
    pub fn start(script: Vec<MockReply>) -> MockServer {
        assert!(!script.is_empty(), "script must have at least one reply");
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
        let addr = listener.local_addr().unwrap();
        let state = Arc::new(Mutex::new(ServerState::default()));
        let served = Arc::new(AtomicUsize::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let script = Arc::new(script);

        let accept_state = Arc::clone(&state);
        let accept_served = Arc::clone(&served);
        let accept_stop = Arc::clone(&stop);
        let accept_handle = std::thread::spawn(move || {
            let mut workers = Vec::new();
            for stream in listener.incoming() {
                if accept_stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let state = Arc::clone(&accept_state);
                let served = Arc::clone(&accept_served);
                let script = Arc::clone(&script);
                workers.push(std::thread::spawn(move || {
                    handle_connection(stream, &state, &served, &script);
                }));
            }
            for w in workers {
                let _ = w.join();
            }
        });

        MockServer {
            addr,
            state,
            served,
            stop,
            accept_handle: Some(accept_handle),
        }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Bodies of every request received so far, in arrival order.
    pub fn requests(&self) -> Vec<serde_json::Value> {
        self.state.lock().unwrap().requests.clone()
    }

    pub fn request_count(&self) -> usize {
        self.served.load(Ordering::SeqCst)
    }

    /// Highest number of simultaneously in-flight requests observed.
    pub fn peak_concurrency(&self) -> usize {
        self.state.lock().unwrap().peak
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Unblock the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.accept_handle.take() {
            let _ = handle.join();
        }
    }
}

fn handle_connection(
    stream: TcpStream,
    state: &Mutex<ServerState>,
    served: &AtomicUsize,
    script: &[MockReply],
) {
    let index = served.fetch_add(1, Ordering::SeqCst);
    {
        let mut s = state.lock().unwrap();
        s.active += 1;
        s.peak = s.peak.max(s.active);
    }
    let result = serve_one(stream, state, script, index);
    {
        let mut s = state.lock().unwrap();
        s.active -= 1;
    }
    let _ = result;
}

fn serve_one(
    mut stream: TcpStream,
    state: &Mutex<ServerState>,
    script: &[MockReply],
    index: usize,
) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(30)))?;
    let body = read_request(&stream)?;
    let parsed: serde_json::Value = serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
    state.lock().unwrap().requests.push(parsed.clone());

    let mut reply = &script[index.min(script.len() - 1)];
    loop {
        match reply {
            MockReply::Delayed(duration, inner) => {
                std::thread::sleep(*duration);
                reply = inner;
            }
            MockReply::Text(text) => {
                return write_response(&mut stream, 200, &chat_body(text));
            }
            MockReply::Echo => {
                let content = parsed
                    .get("messages")
                    .and_then(|m| m.get(0))
                    .and_then(|m| m.get("content"))
                    .and_then(|c| c.as_str())
                    .unwrap_or("")
                    .to_string();
                return write_response(&mut stream, 200, &chat_body(&content));
            }
            MockReply::Status(code) => {
                return write_response(&mut stream, *code, "{}");
            }
            MockReply::Garbage => {
                return write_response(&mut stream, 200, r#"{"unexpected": true}"#);
            }
        }
    }
}

fn chat_body(text: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}}]
    })
    .to_string()
}

fn read_request(stream: &TcpStream) -> std::io::Result<Vec<u8>> {
    let mut reader = BufReader::new(stream);
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            break;
        }
        if let Some(value) = trimmed
            .to_ascii_lowercase()
            .strip_prefix("content-length:")
            .map(str::trim)
            .and_then(|v| v.parse::<usize>().ok())
        {
            content_length = value;
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    Ok(body)
}

fn write_response(stream: &mut TcpStream, status: u16, body: &str) -> std::io::Result<()> {
    let reason = match status {
        200 => "OK",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(response.as_bytes())?;
    stream.flush()
}
