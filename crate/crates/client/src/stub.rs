//! Local HTTP stub for exercising the client without a real endpoint.
//! Records request count, bodies and peak concurrency.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::Router;
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubReply {
    pub status: u16,
    pub body: String,
}

impl StubReply {
    pub fn status(status: u16) -> Self {
        Self { status, body: json!({"error": status}).to_string() }
    }

    pub fn openai_text(text: &str) -> Self {
        Self {
            status: 200,
            body: json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string(),
        }
    }

    pub fn anthropic_text(text: &str) -> Self {
        Self { status: 200, body: json!({"content": [{"type": "text", "text": text}]}).to_string() }
    }

    pub fn generic_text(text: &str) -> Self {
        Self { status: 200, body: json!({"text": text}).to_string() }
    }
}

type Responder = dyn Fn(usize, &Value) -> StubReply + Send + Sync;

struct Inner {
    responder: Box<Responder>,
    delay: Duration,
    requests: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    bodies: Mutex<Vec<Value>>,
}

/// Running stub server; shuts down when dropped.
pub struct StubServer {
    addr: SocketAddr,
    inner: Arc<Inner>,
    task: tokio::task::JoinHandle<()>,
}

async fn handle(State(inner): State<Arc<Inner>>, body: Bytes) -> (StatusCode, String) {
    let n = inner.requests.fetch_add(1, Ordering::SeqCst);
    let now = inner.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    inner.max_in_flight.fetch_max(now, Ordering::SeqCst);
    let value: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    if !inner.delay.is_zero() {
        tokio::time::sleep(inner.delay).await;
    }
    let reply = (inner.responder)(n, &value);
    inner.bodies.lock().unwrap().push(value);
    inner.in_flight.fetch_sub(1, Ordering::SeqCst);
    (StatusCode::from_u16(reply.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR), reply.body)
}

impl StubServer {
    /// Start on an ephemeral localhost port. `responder` gets the zero-based
    /// request index and the parsed request body.
    pub async fn start<F>(responder: F, delay: Duration) -> std::io::Result<Self>
    where
        F: Fn(usize, &Value) -> StubReply + Send + Sync + 'static,
    {
        let inner = Arc::new(Inner {
            responder: Box::new(responder),
            delay,
            requests: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
            bodies: Mutex::new(Vec::new()),
        });
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let app = Router::new().fallback(handle).with_state(inner.clone());
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, app).await;
        });
        Ok(Self { addr, inner, task })
    }

    /// Replies from a fixed script, repeating the last entry once exhausted.
    pub async fn scripted(script: Vec<StubReply>) -> std::io::Result<Self> {
        assert!(!script.is_empty());
        Self::start(move |n, _| script[n.min(script.len() - 1)].clone(), Duration::ZERO).await
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> usize {
        self.inner.requests.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.inner.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn bodies(&self) -> Vec<Value> {
        self.inner.bodies.lock().unwrap().clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}
