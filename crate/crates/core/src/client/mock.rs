//! Mock endpoints: an in-process [`MockTransport`] and an HTTP
//! [`MockServer`] speaking the chat-completion protocol.
//!
//! [`EchoGold`] answers every query with the serialized gold annotation of
//! the sentence, which makes it an oracle for end-to-end checks.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderMap, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use tokio::sync::oneshot;

use super::wire::{ChatCompletion, ChatRequest, ChatResponse};
use super::{Transport, TransportError};
use crate::prompt::{serialize_tuples, TARGET_PREFIX};
use crate::types::{DatasetBundle, Split};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockReply {
    Content(String),
    /// Content cut off at the token limit (`finish_reason: "length"`).
    Truncated(String),
    Status(u16),
}

impl MockReply {
    pub fn content(text: impl Into<String>) -> Self {
        MockReply::Content(text.into())
    }
}

pub type Responder = dyn Fn(&ChatRequest) -> MockReply + Send + Sync;

/// In-process transport that records call counts and peak concurrency.
pub struct MockTransport {
    responder: Box<Responder>,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

impl MockTransport {
    pub fn new(responder: impl Fn(&ChatRequest) -> MockReply + Send + Sync + 'static) -> Self {
        MockTransport {
            responder: Box::new(responder),
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
        }
    }

    /// Replies from a fixed script, repeating the last reply once exhausted.
    pub fn scripted(replies: Vec<MockReply>) -> Self {
        let queue = Mutex::new(VecDeque::from(replies));
        MockTransport::new(move |_| {
            let mut q = queue.lock().unwrap_or_else(|e| e.into_inner());
            if q.len() > 1 {
                q.pop_front().expect("non-empty")
            } else {
                q.front().cloned().unwrap_or(MockReply::Status(500))
            }
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }
}

fn reply_to_result(reply: MockReply) -> Result<ChatCompletion, TransportError> {
    match reply {
        MockReply::Content(content) => Ok(ChatCompletion {
            content,
            finish_reason: Some("stop".into()),
        }),
        MockReply::Truncated(content) => Ok(ChatCompletion {
            content,
            finish_reason: Some("length".into()),
        }),
        MockReply::Status(code) => Err(TransportError::Status {
            code,
            body: format!("mock status {code}"),
        }),
    }
}

impl Transport for MockTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatCompletion, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        let reply = (self.responder)(request);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        reply_to_result(reply)
    }
}

/// Extracts the query sentence from a rendered prompt: the text inside the
/// last `Input: """..."""`.
pub fn query_sentence(prompt: &str) -> Option<&str> {
    const OPEN: &str = "Input: \"\"\"";
    let start = prompt.rfind(OPEN)? + OPEN.len();
    let rest = &prompt[start..];
    let end = rest.rfind("\"\"\"")?;
    Some(&rest[..end])
}

/// Answers each query with its serialized gold tuples; unknown sentences get
/// an empty list.
#[derive(Debug, Clone, Default)]
pub struct EchoGold {
    answers: HashMap<String, String>,
}

impl EchoGold {
    pub fn new(bundle: &DatasetBundle, split: Split) -> Self {
        let mut answers = HashMap::new();
        for s in bundle.split(split) {
            let target = serialize_tuples(&s.gold, &bundle.schema)
                .unwrap_or_else(|_| format!("{TARGET_PREFIX}[]"));
            answers.entry(s.text.clone()).or_insert(target);
        }
        EchoGold { answers }
    }

    pub fn answer(&self, prompt: &str) -> String {
        query_sentence(prompt)
            .and_then(|q| self.answers.get(q).cloned())
            .unwrap_or_else(|| format!("{TARGET_PREFIX}[]"))
    }

    pub fn responder(self) -> impl Fn(&ChatRequest) -> MockReply + Send + Sync + 'static {
        move |req| MockReply::Content(self.answer(req.prompt()))
    }
}

/// Always answers with an empty tuple list.
pub fn empty_list_responder() -> impl Fn(&ChatRequest) -> MockReply + Send + Sync + 'static {
    |_| MockReply::content(format!("{TARGET_PREFIX}[]"))
}

/// Local HTTP server implementing `POST /chat/completions`.
pub struct MockServer {
    url: String,
    requests: Arc<AtomicUsize>,
    shutdown: Option<oneshot::Sender<()>>,
    handle: Option<JoinHandle<()>>,
}

#[derive(Clone)]
struct ServerState {
    responder: Arc<Responder>,
    token: Option<String>,
    requests: Arc<AtomicUsize>,
}

impl MockServer {
    /// Binds to an ephemeral port on 127.0.0.1.
    pub fn start(
        responder: impl Fn(&ChatRequest) -> MockReply + Send + Sync + 'static,
        required_token: Option<String>,
    ) -> std::io::Result<Self> {
        Self::bind("127.0.0.1:0", responder, required_token)
    }

    pub fn bind(
        addr: &str,
        responder: impl Fn(&ChatRequest) -> MockReply + Send + Sync + 'static,
        required_token: Option<String>,
    ) -> std::io::Result<Self> {
        let listener = std::net::TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let port = listener.local_addr()?.port();
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_io()
            .build()?;
        let listener = runtime.block_on(async { tokio::net::TcpListener::from_std(listener) })?;

        let requests = Arc::new(AtomicUsize::new(0));
        let state = ServerState {
            responder: Arc::new(responder),
            token: required_token,
            requests: requests.clone(),
        };
        let app = axum::Router::new().fallback(handle_request).with_state(state);
        let (shutdown, stop) = oneshot::channel::<()>();
        let handle = thread::spawn(move || {
            runtime.block_on(async move {
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = stop.await;
                    })
                    .await;
            });
        });
        Ok(MockServer {
            url: format!("http://127.0.0.1:{port}/v1"),
            requests,
            shutdown: Some(shutdown),
            handle: Some(handle),
        })
    }

    /// Base URL to put in an endpoint configuration (ends in `/v1`).
    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    /// Blocks until the server thread exits, which only happens on shutdown.
    pub fn wait(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn json_response(code: u16, body: String) -> Response {
    let status = StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn handle_request(
    State(state): State<ServerState>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    state.requests.fetch_add(1, Ordering::SeqCst);
    if method != Method::POST || !uri.path().ends_with("/chat/completions") {
        return json_response(404, r#"{"error":"not found"}"#.into());
    }
    if let Some(token) = &state.token {
        let expected = format!("Bearer {token}");
        let authorized = headers
            .get(header::AUTHORIZATION)
            .is_some_and(|v| v.as_bytes() == expected.as_bytes());
        if !authorized {
            return json_response(401, r#"{"error":"unauthorized"}"#.into());
        }
    }
    let chat: ChatRequest = match serde_json::from_slice(&body) {
        Ok(c) => c,
        Err(e) => return json_response(400, serde_json::json!({ "error": e.to_string() }).to_string()),
    };
    // Responders may block (tests inject delays).
    let responder = state.responder.clone();
    let reply = match tokio::task::spawn_blocking(move || responder(&chat)).await {
        Ok(r) => r,
        Err(_) => return json_response(500, r#"{"error":"responder panicked"}"#.into()),
    };
    match reply {
        MockReply::Content(text) => json_response(200, to_json(ChatResponse::single(text, "stop"))),
        MockReply::Truncated(text) => json_response(200, to_json(ChatResponse::single(text, "length"))),
        MockReply::Status(code) => json_response(code, format!(r#"{{"error":"mock status {code}"}}"#)),
    }
}

fn to_json(r: ChatResponse) -> String {
    serde_json::to_string(&r).expect("response serializes")
}
