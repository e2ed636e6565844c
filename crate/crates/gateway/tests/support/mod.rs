//! In-process gateway servers and a fake IM endpoint for integration tests.

#![allow(dead_code)]

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::Router;
use dataclaw_core::llm::{
    Backend, BackendFactory, BackendKind, CompletionRequest, CompletionResult, LlmError,
    ScriptedBackend,
};
use dataclaw_core::persist::Workspace;
use dataclaw_core::types::{AgentEvent, Id, SequentialIds, StepClock};
use dataclaw_core::{AgentConfig, AgentRuntime, ChatMessage};
use dataclaw_gateway::{Gateway, GatewayOptions, RetryPolicy};
use serde_json::Value;

pub async fn listen(app: Router) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    addr
}

pub struct TestServer {
    pub base: String,
    pub gw: Arc<Gateway>,
    pub http: reqwest::Client,
}

pub fn fast_options() -> GatewayOptions {
    GatewayOptions {
        heartbeat: Duration::from_millis(200),
        retry: RetryPolicy {
            delays: vec![
                Duration::from_millis(10),
                Duration::from_millis(20),
                Duration::from_millis(40),
            ],
        },
    }
}

/// Deterministic runtime (fixed clock, sequential ids) behind a live gateway.
pub async fn start(
    ws: Workspace,
    config: AgentConfig,
    backends: Arc<dyn BackendFactory>,
    options: GatewayOptions,
) -> TestServer {
    let rt = AgentRuntime::new(
        ws,
        config,
        backends,
        Arc::new(StepClock::fixed()),
        Arc::new(SequentialIds::default()),
    );
    start_with(Arc::new(rt), options).await
}

pub async fn start_with(rt: Arc<AgentRuntime>, options: GatewayOptions) -> TestServer {
    let gw = Arc::new(Gateway::new(rt, options).unwrap());
    let addr = listen(gw.router()).await;
    TestServer {
        base: format!("http://{addr}"),
        gw,
        http: reqwest::Client::new(),
    }
}

impl TestServer {
    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let r = self.http.get(self.url(path)).send().await.unwrap();
        (r.status().as_u16(), r.json().await.unwrap_or(Value::Null))
    }

    pub async fn send(&self, method: reqwest::Method, path: &str, body: &Value) -> (u16, Value) {
        let r = self
            .http
            .request(method, self.url(path))
            .json(body)
            .send()
            .await
            .unwrap();
        (r.status().as_u16(), r.json().await.unwrap_or(Value::Null))
    }

    pub async fn post(&self, path: &str, body: &Value) -> (u16, Value) {
        self.send(reqwest::Method::POST, path, body).await
    }

    pub async fn put(&self, path: &str, body: &Value) -> (u16, Value) {
        self.send(reqwest::Method::PUT, path, body).await
    }

    pub async fn new_session(&self, channel: &str) -> Id {
        let (code, body) = self
            .post("/api/sessions", &serde_json::json!({"channel_id": channel}))
            .await;
        assert_eq!(code, 201, "{body}");
        Id::parse(body["id"].as_str().unwrap()).unwrap()
    }

    pub async fn say(&self, session: &Id, text: &str) -> u16 {
        self.post(
            &format!("/api/sessions/{session}/messages"),
            &serde_json::json!({"text": text}),
        )
        .await
        .0
    }

    /// Waits until every background turn and delivery has finished.
    pub async fn settle(&self) {
        wait_for(|| self.gw.pending_turns() == 0, Duration::from_secs(20)).await;
    }

    pub fn events(&self, session: &Id) -> Vec<AgentEvent> {
        self.gw.runtime().bus().events(session)
    }
}

pub async fn wait_for(mut cond: impl FnMut() -> bool, limit: Duration) {
    let start = Instant::now();
    while !cond() {
        assert!(
            start.elapsed() < limit,
            "condition not reached within {limit:?}"
        );
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
}

/// Raw SSE bytes read from a live response.
pub struct SseReader {
    resp: reqwest::Response,
    pub buf: String,
}

impl SseReader {
    pub async fn open(
        http: &reqwest::Client,
        url: &str,
        last_event_id: Option<u64>,
    ) -> (reqwest::header::HeaderMap, SseReader) {
        let mut req = http.get(url);
        if let Some(id) = last_event_id {
            req = req.header("Last-Event-ID", id.to_string());
        }
        let resp = req.send().await.unwrap();
        assert_eq!(resp.status(), 200);
        (
            resp.headers().clone(),
            SseReader {
                resp,
                buf: String::new(),
            },
        )
    }

    /// Reads until `stop` holds for the buffer, or fails after `limit`.
    pub async fn read_until(&mut self, stop: impl Fn(&str) -> bool, limit: Duration) -> &str {
        let deadline = Instant::now() + limit;
        while !stop(&self.buf) {
            let left = deadline.saturating_duration_since(Instant::now());
            match tokio::time::timeout(left, self.resp.chunk()).await {
                Ok(Ok(Some(chunk))) => self.buf.push_str(std::str::from_utf8(&chunk).unwrap()),
                Ok(Ok(None)) => panic!("stream ended early: {}", self.buf),
                Ok(Err(e)) => panic!("stream error: {e}"),
                Err(_) => panic!("timed out; got so far:\n{}", self.buf),
            }
        }
        &self.buf
    }

    /// Event frames (heartbeats dropped), each with its terminator.
    pub fn frames(&self) -> Vec<String> {
        self.buf
            .split_inclusive("\n\n")
            .filter(|f| !f.starts_with(':'))
            .map(str::to_string)
            .collect()
    }
}

pub fn frame_seq(frame: &str) -> u64 {
    frame
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("id: "))
        .unwrap()
        .parse()
        .unwrap()
}

pub fn frame_kind(frame: &str) -> &str {
    frame
        .lines()
        .nth(1)
        .and_then(|l| l.strip_prefix("event: "))
        .unwrap()
}

pub fn ends_turn(buf: &str) -> bool {
    buf.contains("event: done\n") || buf.contains("event: error\n")
}

/// Scripted replies with a pause before each one.
pub struct Slow {
    pub inner: ScriptedBackend,
    pub delay: Duration,
}

impl Backend for Slow {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, LlmError> {
        std::thread::sleep(self.delay);
        self.inner.complete(request)
    }

    fn summarize(&self, messages: &[ChatMessage], budget: u64) -> Result<String, LlmError> {
        self.inner.summarize(messages, budget)
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }
}

/// Every session gets its own slow copy of `script`.
pub fn slow_script(script: Vec<String>, delay: Duration) -> Arc<dyn BackendFactory> {
    Arc::new(move |_: &Id| -> Arc<dyn Backend> {
        Arc::new(Slow {
            inner: ScriptedBackend::new(script.clone()),
            delay,
        })
    })
}

#[derive(Debug, Clone)]
pub struct Captured {
    pub path: String,
    pub content_type: String,
    pub body: Bytes,
}

/// Fake Telegram-style bot endpoint answering with queued status codes (200 once the queue is empty).
#[derive(Clone, Default)]
pub struct FakeIm {
    pub requests: Arc<Mutex<Vec<Captured>>>,
    pub statuses: Arc<Mutex<VecDeque<u16>>>,
}

impl FakeIm {
    pub async fn start(statuses: &[u16]) -> (FakeIm, String) {
        let fake = FakeIm {
            statuses: Arc::new(Mutex::new(statuses.iter().copied().collect())),
            ..FakeIm::default()
        };
        let app = Router::new()
            .route("/bot/{method}", post(fake_handler))
            .with_state(fake.clone());
        let addr = listen(app).await;
        (fake, format!("http://{addr}/bot"))
    }

    pub fn requests(&self) -> Vec<Captured> {
        self.requests.lock().unwrap().clone()
    }
}

async fn fake_handler(
    State(fake): State<FakeIm>,
    Path(method): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> StatusCode {
    let content_type = headers
        .get("content-type")
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .to_string();
    fake.requests.lock().unwrap().push(Captured {
        path: method,
        content_type,
        body,
    });
    let code = fake.statuses.lock().unwrap().pop_front().unwrap_or(200);
    StatusCode::from_u16(code).unwrap()
}

/// A bound port with nothing listening.
pub async fn dead_url() -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    format!("http://{addr}/bot")
}

pub fn telegram_update(chat: i64, text: &str) -> Value {
    serde_json::json!({"update_id": 1, "message": {"chat": {"id": chat}, "from": {"id": chat}, "text": text}})
}
