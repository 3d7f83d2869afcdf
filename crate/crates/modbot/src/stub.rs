//! In-process stand-in for the Bot API (`getUpdates`, `deleteMessage`,
//! `banChatMember`) and the `/embed` route, recording every call.

use std::collections::{HashMap, VecDeque};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{Method, StatusCode};
use axum::routing::{any, post};
use axum::{Json, Router};
use propwatch_core::embeddings::hash_embed;
use serde::Serialize;
use serde_json::{json, Value};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::embed::{EmbedRequest, EmbedResponse};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StubCall {
    pub method: String,
    pub body: Value,
    /// Whether the stub answered `ok: true`.
    pub ok: bool,
}

impl StubCall {
    pub fn chat_id(&self) -> Option<String> {
        match self.body.get("chat_id")? {
            Value::Number(n) => Some(n.to_string()),
            Value::String(s) => Some(s.clone()),
            _ => None,
        }
    }

    pub fn message_id(&self) -> Option<i64> {
        self.body.get("message_id")?.as_i64()
    }
}

#[derive(Debug, Default)]
struct StubState {
    token: String,
    calls: Vec<StubCall>,
    updates: VecDeque<Value>,
    next_update_id: i64,
    /// Upcoming action calls to answer with HTTP 500.
    fail_next: usize,
    action_delay: Duration,
    embed_dim: usize,
}

type Shared = Arc<Mutex<StubState>>;

pub struct StubServer {
    addr: SocketAddr,
    state: Shared,
    shutdown: Option<oneshot::Sender<()>>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Binds an ephemeral localhost port.
    pub async fn start(token: &str) -> std::io::Result<Self> {
        let state: Shared = Arc::new(Mutex::new(StubState {
            token: token.to_string(),
            embed_dim: 64,
            ..StubState::default()
        }));
        let app = Router::new()
            .route("/embed", post(embed))
            .route("/{*path}", any(api))
            .with_state(state.clone());
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", 0)).await?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let handle = tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(Self {
            addr,
            state,
            shutdown: Some(tx),
            handle: Some(handle),
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn embed_url(&self) -> String {
        format!("http://{}/embed", self.addr)
    }

    pub fn calls(&self) -> Vec<StubCall> {
        self.state.lock().expect("stub state").calls.clone()
    }

    pub fn calls_to(&self, method: &str) -> Vec<StubCall> {
        self.calls().into_iter().filter(|c| c.method == method).collect()
    }

    /// Queues a message for `getUpdates`, wrapping it in an update envelope.
    pub fn push_message(&self, message: Value) {
        let mut s = self.state.lock().expect("stub state");
        s.next_update_id += 1;
        let id = s.next_update_id;
        s.updates.push_back(json!({"update_id": id, "message": message}));
    }

    pub fn fail_next(&self, n: usize) {
        self.state.lock().expect("stub state").fail_next = n;
    }

    pub fn set_action_delay(&self, d: Duration) {
        self.state.lock().expect("stub state").action_delay = d;
    }

    pub fn set_embed_dim(&self, dim: usize) {
        self.state.lock().expect("stub state").embed_dim = dim;
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(h) = self.handle.take() {
            let _ = h.await;
        }
    }
}

fn reply(status: StatusCode, body: Value) -> (StatusCode, Json<Value>) {
    (status, Json(body))
}

async fn api(
    State(state): State<Shared>,
    Path(path): Path<String>,
    method: Method,
    Query(query): Query<HashMap<String, String>>,
    body: Bytes,
) -> (StatusCode, Json<Value>) {
    let Some((token, name)) = path.strip_prefix("bot").and_then(|p| p.split_once('/')) else {
        return reply(StatusCode::NOT_FOUND, json!({"ok": false, "description": "Not Found"}));
    };
    if token != state.lock().expect("stub state").token {
        return reply(StatusCode::UNAUTHORIZED, json!({"ok": false, "description": "Unauthorized"}));
    }
    match (method, name) {
        (Method::GET, "getUpdates") => {
            let offset: i64 = query.get("offset").and_then(|v| v.parse().ok()).unwrap_or(0);
            let timeout: u64 = query.get("timeout").and_then(|v| v.parse().ok()).unwrap_or(0);
            // a short wait stands in for the long poll
            for _ in 0..(timeout.min(1) * 10) {
                if !state.lock().expect("stub state").updates.is_empty() {
                    break;
                }
                tokio::time::sleep(Duration::from_millis(20)).await;
            }
            let mut s = state.lock().expect("stub state");
            while s.updates.front().is_some_and(|u| u["update_id"].as_i64().unwrap_or(0) < offset) {
                s.updates.pop_front();
            }
            let batch: Vec<Value> = s.updates.iter().take(100).cloned().collect();
            s.calls.push(StubCall {
                method: "getUpdates".into(),
                body: json!({"offset": offset}),
                ok: true,
            });
            reply(StatusCode::OK, json!({"ok": true, "result": batch}))
        }
        (Method::POST, "deleteMessage" | "banChatMember") => {
            let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
            let delay = state.lock().expect("stub state").action_delay;
            if !delay.is_zero() {
                tokio::time::sleep(delay).await;
            }
            let mut s = state.lock().expect("stub state");
            let fail = s.fail_next > 0;
            if fail {
                s.fail_next -= 1;
            }
            s.calls.push(StubCall {
                method: name.to_string(),
                body,
                ok: !fail,
            });
            if fail {
                reply(
                    StatusCode::INTERNAL_SERVER_ERROR,
                    json!({"ok": false, "description": "Internal Server Error: injected"}),
                )
            } else {
                reply(StatusCode::OK, json!({"ok": true, "result": true}))
            }
        }
        _ => reply(StatusCode::NOT_FOUND, json!({"ok": false, "description": "Not Found: method not found"})),
    }
}

async fn embed(State(state): State<Shared>, Json(req): Json<EmbedRequest>) -> (StatusCode, Json<Value>) {
    let dim = state.lock().expect("stub state").embed_dim;
    let vectors: Result<Vec<Vec<f32>>, _> = req.texts.iter().map(|t| hash_embed(t, dim)).collect();
    match vectors {
        Ok(vectors) => {
            let resp = EmbedResponse { dim, vectors };
            (StatusCode::OK, Json(serde_json::to_value(resp).expect("serializable")))
        }
        Err(e) => (StatusCode::BAD_REQUEST, Json(json!({"error": e.to_string()}))),
    }
}
