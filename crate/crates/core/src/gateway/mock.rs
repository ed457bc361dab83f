//! Stand-in for the external SMS provider: records sends in a ledger,
//! injects signed webhooks into the gateway under test, and can be told
//! to fail.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use uuid::Uuid;

use super::outbox::OutboundRequest;
use super::webhook::{sign, SIGNATURE_HEADER};
use super::InboundWebhook;
use crate::orchestrator::now_ms;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub id: String,
    pub to: String,
    pub body: String,
    pub idempotency_key: Uuid,
    pub received_at_ms: u64,
}

#[derive(Debug, Clone)]
pub struct MockGatewayConfig {
    /// Bearer token expected on `/send`.
    pub token: String,
    /// Base URL of the gateway under test, for `/inject`.
    pub webhook_base: Option<String>,
    pub webhook_secret: Vec<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InjectRequest {
    pub from: String,
    pub to: String,
    pub body: String,
    #[serde(default)]
    pub message_id: Option<String>,
    /// Send without a signature header.
    #[serde(default)]
    pub unsigned: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InjectResult {
    pub status: u16,
    pub message_id: String,
    pub response: serde_json::Value,
}

struct MockState {
    config: MockGatewayConfig,
    ledger: Mutex<Vec<LedgerEntry>>,
    by_key: Mutex<HashMap<Uuid, String>>,
    fail_next: AtomicU32,
    webhook_base: Mutex<Option<String>>,
    http: reqwest::Client,
}

pub struct MockGateway {
    pub addr: SocketAddr,
    state: Arc<MockState>,
    task: JoinHandle<()>,
}

impl MockGateway {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn ledger(&self) -> Vec<LedgerEntry> {
        self.state.ledger.lock().expect("ledger lock").clone()
    }

    /// The next `n` sends fail with HTTP 500.
    pub fn fail_next(&self, n: u32) {
        self.state.fail_next.store(n, Ordering::SeqCst);
    }

    /// Points `/inject` at a gateway started after the mock.
    pub fn set_webhook_base(&self, base: &str) {
        *self.state.webhook_base.lock().expect("base lock") = Some(base.to_owned());
    }
}

impl Drop for MockGateway {
    fn drop(&mut self) {
        self.task.abort();
    }
}

async fn send(State(s): State<Arc<MockState>>, headers: HeaderMap, Json(req): Json<OutboundRequest>) -> Response {
    let expected = format!("Bearer {}", s.config.token);
    if headers.get("authorization").and_then(|v| v.to_str().ok()) != Some(expected.as_str()) {
        return (StatusCode::UNAUTHORIZED, "bad token").into_response();
    }
    let failing = s
        .fail_next
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
        .is_ok();
    if failing {
        return (StatusCode::INTERNAL_SERVER_ERROR, "injected fault").into_response();
    }
    let mut keys = s.by_key.lock().expect("key lock");
    if let Some(id) = keys.get(&req.idempotency_key) {
        return Json(serde_json::json!({ "status": "duplicate", "id": id })).into_response();
    }
    let id = format!("SM{}", Uuid::new_v4().simple());
    keys.insert(req.idempotency_key, id.clone());
    s.ledger.lock().expect("ledger lock").push(LedgerEntry {
        id: id.clone(),
        to: req.to,
        body: req.body,
        idempotency_key: req.idempotency_key,
        received_at_ms: now_ms(),
    });
    Json(serde_json::json!({ "status": "sent", "id": id })).into_response()
}

async fn ledger(State(s): State<Arc<MockState>>) -> Json<Vec<LedgerEntry>> {
    Json(s.ledger.lock().expect("ledger lock").clone())
}

#[derive(Deserialize)]
struct Faults {
    fail_next: u32,
}

async fn faults(State(s): State<Arc<MockState>>, Json(f): Json<Faults>) -> StatusCode {
    s.fail_next.store(f.fail_next, Ordering::SeqCst);
    StatusCode::NO_CONTENT
}

async fn inject(State(s): State<Arc<MockState>>, Json(req): Json<InjectRequest>) -> Response {
    let base = s.webhook_base.lock().expect("base lock").clone();
    let Some(base) = base else {
        return (StatusCode::CONFLICT, "no webhook target configured").into_response();
    };
    let hook = InboundWebhook {
        message_id: req.message_id.unwrap_or_else(|| Uuid::new_v4().to_string()),
        from: req.from,
        to: req.to,
        body: req.body,
    };
    let body = serde_json::to_vec(&hook).expect("hook serialises");
    let mut post = s
        .http
        .post(format!("{}/webhook/sms", base.trim_end_matches('/')))
        .header("content-type", "application/json");
    if !req.unsigned {
        post = post.header(SIGNATURE_HEADER, sign(&s.config.webhook_secret, &body));
    }
    match post.body(body).send().await {
        Ok(r) => {
            let status = r.status().as_u16();
            let response = r.json().await.unwrap_or(serde_json::Value::Null);
            Json(InjectResult {
                status,
                message_id: hook.message_id,
                response,
            })
            .into_response()
        }
        Err(e) => (StatusCode::BAD_GATEWAY, e.to_string()).into_response(),
    }
}

/// Starts the mock on `listener`. Routes: `POST /send`, `POST /inject`,
/// `POST /faults`, `GET /ledger`.
pub fn run_mock_gateway(listener: TcpListener, config: MockGatewayConfig) -> std::io::Result<MockGateway> {
    let addr = listener.local_addr()?;
    let state = Arc::new(MockState {
        webhook_base: Mutex::new(config.webhook_base.clone()),
        config,
        ledger: Mutex::new(Vec::new()),
        by_key: Mutex::new(HashMap::new()),
        fail_next: AtomicU32::new(0),
        http: reqwest::Client::new(),
    });
    let app = Router::new()
        .route("/send", post(send))
        .route("/inject", post(inject))
        .route("/faults", post(faults))
        .route("/ledger", get(ledger))
        .with_state(state.clone());
    let task = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            tracing::error!("mock gateway stopped: {e}");
        }
    });
    Ok(MockGateway { addr, state, task })
}
