//! In-process HTTP stub for tests and offline dry runs.
//!
//! [`MockServer`] binds an ephemeral localhost port and answers every request
//! with a user-supplied handler. [`deterministic_llm`] is a handler that
//! speaks the chat-completion protocol and produces QA-formatted answers
//! derived only from the prompt, so repeated runs are byte-identical.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub struct MockRequest {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl MockRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct MockResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl MockResponse {
    pub fn new(status: u16, body: impl Into<Vec<u8>>) -> Self {
        Self {
            status,
            headers: Vec::new(),
            body: body.into(),
        }
    }

    pub fn ok(body: impl Into<Vec<u8>>) -> Self {
        Self::new(200, body)
    }

    pub fn json(value: &serde_json::Value) -> Self {
        let mut r = Self::ok(serde_json::to_vec(value).expect("json"));
        r.headers.push(("Content-Type".into(), "application/json".into()));
        r
    }

    pub fn with_header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }
}

type Handler = dyn Fn(&MockRequest) -> MockResponse + Send + Sync;

pub struct MockServer {
    addr: String,
    hits: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    worker: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start<F>(handler: F) -> std::io::Result<Self>
    where
        F: Fn(&MockRequest) -> MockResponse + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?.to_string();
        let hits = Arc::new(AtomicUsize::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let handler: Arc<Handler> = Arc::new(handler);
        let worker = {
            let hits = hits.clone();
            let stop = stop.clone();
            thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let handler = handler.clone();
                    let hits = hits.clone();
                    thread::spawn(move || {
                        let _ = serve(stream, &*handler, &hits);
                    });
                }
            })
        };
        Ok(Self {
            addr,
            hits,
            stop,
            worker: Some(worker),
        })
    }

    /// `http://127.0.0.1:<port>`
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Number of requests answered so far.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect(&self.addr);
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn serve(stream: TcpStream, handler: &Handler, hits: &AtomicUsize) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    if reader.read_line(&mut line)? == 0 {
        return Ok(());
    }
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h)? == 0 {
            break;
        }
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            headers.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let len = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse::<usize>().ok())
        .unwrap_or(0);
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body)?;

    let req = MockRequest {
        method,
        path,
        headers,
        body,
    };
    hits.fetch_add(1, Ordering::SeqCst);
    let resp = handler(&req);

    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 {} {}\r\nContent-Length: {}\r\nConnection: close\r\n",
        resp.status,
        reason(resp.status),
        resp.body.len()
    )?;
    for (k, v) in &resp.headers {
        write!(out, "{k}: {v}\r\n")?;
    }
    out.write_all(b"\r\n")?;
    out.write_all(&resp.body)?;
    out.flush()
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    }
}

/// Wraps assistant text in a chat-completion response body.
pub fn chat_completion(model: &str, content: &str) -> serde_json::Value {
    serde_json::json!({
        "id": "chatcmpl-mock",
        "object": "chat.completion",
        "model": model,
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": content},
            "finish_reason": "stop"
        }]
    })
}

/// The user message of a chat-completion request body, if any.
pub fn prompt_of(req: &MockRequest) -> Option<String> {
    let v: serde_json::Value = serde_json::from_slice(&req.body).ok()?;
    v["messages"]
        .as_array()?
        .iter()
        .rev()
        .find(|m| m["role"] == "user")
        .and_then(|m| m["content"].as_str())
        .map(str::to_string)
}

/// Ten numbered `Q:`/`A:` items computed from the prompt text alone.
pub fn deterministic_answer(prompt: &str) -> String {
    let tag = hex::encode(&Sha256::digest(prompt.as_bytes())[..4]);
    let mut words: Vec<&str> = Vec::new();
    for w in prompt
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() >= 4)
    {
        if !words.contains(&w) {
            words.push(w);
        }
    }
    let mut out = String::new();
    for i in 1..=10 {
        let word = if words.is_empty() {
            "the text"
        } else {
            words[(i * 7) % words.len()]
        };
        out.push_str(&format!(
            "{i}. Q: What does passage {tag} state about {word}?\nA: Passage {tag} discusses {word} in point {i}.\n"
        ));
    }
    out
}

/// Chat-completion handler answering every prompt with [`deterministic_answer`].
pub fn deterministic_llm(req: &MockRequest) -> MockResponse {
    match prompt_of(req) {
        Some(prompt) => MockResponse::json(&chat_completion("mock", &deterministic_answer(&prompt))),
        None => MockResponse::new(400, "missing user message"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answer_is_stable() {
        assert_eq!(
            deterministic_answer("abc text here"),
            deterministic_answer("abc text here")
        );
        assert_ne!(deterministic_answer("one"), deterministic_answer("two"));
        assert_eq!(deterministic_answer("x").lines().count(), 20);
    }

    #[test]
    fn serves_and_counts() {
        let server = MockServer::start(|r| MockResponse::ok(format!("{} {}", r.method, r.path))).unwrap();
        let agent = ureq::Agent::new_with_defaults();
        let body = agent
            .get(&format!("{}/x?y=1", server.url()))
            .call()
            .unwrap()
            .body_mut()
            .read_to_string()
            .unwrap();
        assert_eq!(body, "GET /x?y=1");
        assert_eq!(server.hits(), 1);
    }
}
