//! A local chat-completion server for tests and examples. Speaks just enough
//! HTTP/1.1 for one request per connection.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::{json, Value};

use crate::augment::prompt_fields;

/// One request as seen by the server.
#[derive(Debug, Clone)]
pub struct MockRequest {
    /// Zero-based arrival index.
    pub seq: usize,
    pub authorization: Option<String>,
    pub body: Value,
}

impl MockRequest {
    /// Content of the first chat message.
    pub fn prompt(&self) -> &str {
        self.body
            .pointer("/messages/0/content")
            .and_then(Value::as_str)
            .unwrap_or("")
    }
}

pub type Responder = dyn Fn(&MockRequest) -> (u16, String) + Send + Sync;

/// Wraps `content` in a chat-completion response body.
pub fn chat_body(content: &str) -> String {
    json!({
        "id": "mock",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}]
    })
    .to_string()
}

/// Answers a prompt from `build_prompt` with `k` deterministic rewrites.
pub fn echo_paraphrases(req: &MockRequest) -> (u16, String) {
    match prompt_fields(req.prompt()) {
        Some((text, k)) => {
            let items: Vec<String> = (1..=k).map(|i| format!("{text} (variant {i})")).collect();
            (200, chat_body(&serde_json::to_string(&items).unwrap()))
        }
        None => (400, json!({"error": "unrecognized prompt"}).to_string()),
    }
}

pub struct MockChatServer {
    addr: SocketAddr,
    requests: Arc<Mutex<Vec<MockRequest>>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockChatServer {
    pub fn start(responder: impl Fn(&MockRequest) -> (u16, String) + Send + Sync + 'static) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let requests = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let responder: Arc<Responder> = Arc::new(responder);
        let seq = Arc::new(AtomicUsize::new(0));

        let handle = {
            let (requests, stop) = (requests.clone(), stop.clone());
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let (requests, responder, seq) = (requests.clone(), responder.clone(), seq.clone());
                    std::thread::spawn(move || {
                        let _ = serve_one(stream, &requests, &*responder, &seq);
                    });
                }
            })
        };
        Ok(MockChatServer {
            addr,
            requests,
            stop,
            handle: Some(handle),
        })
    }

    /// Server answering every prompt via [`echo_paraphrases`].
    pub fn paraphrasing() -> std::io::Result<Self> {
        Self::start(echo_paraphrases)
    }

    /// Replies with the scripted `(status, body)` pairs in order, then falls
    /// back to [`echo_paraphrases`].
    pub fn scripted(script: Vec<(u16, String)>) -> std::io::Result<Self> {
        Self::start(move |req| match script.get(req.seq) {
            Some(reply) => reply.clone(),
            None => echo_paraphrases(req),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}/v1/chat/completions", self.addr)
    }

    pub fn request_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }

    pub fn requests(&self) -> Vec<MockRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl Drop for MockChatServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve_one(
    stream: TcpStream,
    log: &Mutex<Vec<MockRequest>>,
    responder: &Responder,
    seq: &AtomicUsize,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.is_empty() {
        return Ok(());
    }
    let mut content_length = 0usize;
    let mut authorization = None;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            let value = value.trim();
            match name.trim().to_ascii_lowercase().as_str() {
                "content-length" => content_length = value.parse().unwrap_or(0),
                "authorization" => authorization = Some(value.to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0; content_length];
    reader.read_exact(&mut body)?;
    let request = MockRequest {
        seq: seq.fetch_add(1, Ordering::SeqCst),
        authorization,
        body: serde_json::from_slice(&body).unwrap_or(Value::Null),
    };
    let (status, reply) = responder(&request);
    log.lock().unwrap().push(request);

    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        401 => "Unauthorized",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    };
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    )?;
    stream.flush()
}
