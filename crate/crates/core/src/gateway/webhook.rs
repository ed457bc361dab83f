use std::collections::{HashMap, HashSet, VecDeque};
use std::io::Write;
use std::path::PathBuf;
use std::pin::Pin;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use hmac::{Hmac, KeyInit, Mac};
use serde::Serialize;
use sha2::Sha256;
use uuid::Uuid;

use super::policy::{decide, Decision, InboundWebhook, RejectReason, SenderPolicy};
use crate::app::ChatMessage;
use crate::orchestrator::{now_ms, Orchestrator, OrchestratorError};

pub const SIGNATURE_HEADER: &str = "x-zc-signature";
const REMEMBERED_IDS: usize = 10_000;

type HmacSha256 = Hmac<Sha256>;

/// Hex HMAC-SHA256 of `body` under `secret`.
pub fn sign(secret: &[u8], body: &[u8]) -> String {
    let mut mac = HmacSha256::new_from_slice(secret).expect("hmac takes any key length");
    mac.update(body);
    hex::encode(mac.finalize().into_bytes())
}

/// Constant-time check of a hex signature; accepts an optional `sha256=`
/// prefix.
pub fn verify(secret: &[u8], body: &[u8], signature: &str) -> bool {
    let sig = signature.trim();
    let sig = sig.strip_prefix("sha256=").unwrap_or(sig);
    let Ok(raw) = hex::decode(sig) else { return false };
    let mut mac = HmacSha256::new_from_slice(secret).expect("hmac takes any key length");
    mac.update(body);
    mac.verify_slice(&raw).is_ok()
}

pub type BoxFut<'a, T> = Pin<Box<dyn std::future::Future<Output = T> + Send + 'a>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SinkError {
    Unavailable(String),
}

/// Where accepted messages go.
pub trait MessageSink: Send + Sync {
    fn route(&self, to: &str) -> Option<Uuid>;
    fn deliver(&self, instance: Uuid, msg: ChatMessage) -> BoxFut<'_, Result<(), SinkError>>;
}

impl MessageSink for Orchestrator {
    fn route(&self, to: &str) -> Option<Uuid> {
        self.instance_for_binding(to)
    }

    fn deliver(&self, instance: Uuid, msg: ChatMessage) -> BoxFut<'_, Result<(), SinkError>> {
        Box::pin(async move {
            match Orchestrator::deliver(self, instance, msg).await {
                Ok(_) => Ok(()),
                Err(e @ (OrchestratorError::InstanceDown | OrchestratorError::UnknownInstance)) => {
                    Err(SinkError::Unavailable(e.to_string()))
                }
                Err(e) => Err(SinkError::Unavailable(e.to_string())),
            }
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct Policies {
    pub default: SenderPolicy,
    pub per_instance: HashMap<Uuid, SenderPolicy>,
}

impl Policies {
    pub fn for_instance(&self, id: Uuid) -> &SenderPolicy {
        self.per_instance.get(&id).unwrap_or(&self.default)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "disposition", rename_all = "snake_case")]
pub enum Disposition {
    Delivered { instance: Uuid, no_preview: bool },
    Duplicate,
    Rejected { reason: RejectReason },
}

#[derive(Serialize)]
struct QuarantineEntry<'a> {
    at_ms: u64,
    reason: RejectReason,
    #[serde(flatten)]
    hook: &'a InboundWebhook,
}

struct Seen {
    order: VecDeque<String>,
    set: HashSet<String>,
}

pub struct Gateway {
    secret: Vec<u8>,
    sink: Arc<dyn MessageSink>,
    policies: Mutex<Policies>,
    quarantine: PathBuf,
    quarantine_lock: Mutex<()>,
    seen: Mutex<Seen>,
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("signature check failed")]
    Unauthentic,
    #[error("malformed webhook: {0}")]
    Malformed(String),
    #[error("no instance bound to {0}")]
    NoRoute(String),
    #[error("instance unavailable: {0}")]
    Unavailable(String),
}

impl Gateway {
    pub fn new(secret: impl Into<Vec<u8>>, sink: Arc<dyn MessageSink>, policies: Policies, quarantine: PathBuf) -> Self {
        Gateway {
            secret: secret.into(),
            sink,
            policies: Mutex::new(policies),
            quarantine,
            quarantine_lock: Mutex::new(()),
            seen: Mutex::new(Seen {
                order: VecDeque::new(),
                set: HashSet::new(),
            }),
        }
    }

    pub fn set_policy(&self, instance: Uuid, policy: SenderPolicy) {
        self.policies.lock().expect("policy lock").per_instance.insert(instance, policy);
    }

    pub fn quarantine_path(&self) -> &std::path::Path {
        &self.quarantine
    }

    fn quarantine(&self, hook: &InboundWebhook, reason: RejectReason) {
        let entry = QuarantineEntry {
            at_ms: now_ms(),
            reason,
            hook,
        };
        let mut line = serde_json::to_vec(&entry).expect("entry serialises");
        line.push(b'\n');
        let _g = self.quarantine_lock.lock().expect("quarantine lock");
        let written = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.quarantine)
            .and_then(|mut f| f.write_all(&line));
        if let Err(e) = written {
            tracing::error!("quarantine write failed: {e}");
        }
    }

    fn first_sighting(&self, id: &str) -> bool {
        let mut s = self.seen.lock().expect("seen lock");
        if !s.set.insert(id.to_owned()) {
            return false;
        }
        s.order.push_back(id.to_owned());
        if s.order.len() > REMEMBERED_IDS {
            if let Some(old) = s.order.pop_front() {
                s.set.remove(&old);
            }
        }
        true
    }

    fn forget(&self, id: &str) {
        self.seen.lock().expect("seen lock").set.remove(id);
    }

    /// Full inbound path: signature, parse, route, policy, delivery.
    pub async fn handle_inbound(&self, raw: &[u8], signature: Option<&str>) -> Result<Disposition, GatewayError> {
        if !signature.is_some_and(|s| verify(&self.secret, raw, s)) {
            return Err(GatewayError::Unauthentic);
        }
        let hook: InboundWebhook =
            serde_json::from_slice(raw).map_err(|e| GatewayError::Malformed(e.to_string()))?;
        let instance = self
            .sink
            .route(&hook.to)
            .ok_or_else(|| GatewayError::NoRoute(hook.to.clone()))?;
        let policy = self.policies.lock().expect("policy lock").for_instance(instance).clone();
        match decide(&policy, &hook) {
            Decision::Reject(reason) => {
                if reason == RejectReason::SenderBlocked {
                    self.quarantine(&hook, reason);
                }
                Ok(Disposition::Rejected { reason })
            }
            Decision::Deliver { no_preview } => {
                if !self.first_sighting(&hook.message_id) {
                    return Ok(Disposition::Duplicate);
                }
                let mut msg = ChatMessage::inbound(hook.from.clone(), hook.body.clone(), now_ms());
                msg.no_preview = no_preview;
                if let Err(SinkError::Unavailable(e)) = self.sink.deliver(instance, msg).await {
                    // let the provider retry later
                    self.forget(&hook.message_id);
                    return Err(GatewayError::Unavailable(e));
                }
                Ok(Disposition::Delivered { instance, no_preview })
            }
        }
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: &'static str,
}

fn error(status: StatusCode, code: &'static str) -> Response {
    (status, Json(ErrorBody { error: code })).into_response()
}

async fn webhook(State(gw): State<Arc<Gateway>>, headers: HeaderMap, body: Bytes) -> Response {
    let sig = headers.get(SIGNATURE_HEADER).and_then(|v| v.to_str().ok());
    match gw.handle_inbound(&body, sig).await {
        Ok(d @ (Disposition::Delivered { .. } | Disposition::Duplicate)) => Json(d).into_response(),
        Ok(d @ Disposition::Rejected { reason }) => {
            let status = match reason {
                RejectReason::SenderBlocked => StatusCode::FORBIDDEN,
                RejectReason::TooLarge => StatusCode::PAYLOAD_TOO_LARGE,
                _ => StatusCode::BAD_REQUEST,
            };
            (status, Json(d)).into_response()
        }
        Err(GatewayError::Unauthentic) => error(StatusCode::UNAUTHORIZED, "UNAUTHENTIC"),
        Err(GatewayError::Malformed(_)) => error(StatusCode::BAD_REQUEST, "MALFORMED"),
        Err(GatewayError::NoRoute(_)) => error(StatusCode::NOT_FOUND, "NO_ROUTE"),
        Err(GatewayError::Unavailable(_)) => error(StatusCode::SERVICE_UNAVAILABLE, "INSTANCE_DOWN"),
    }
}

/// `POST /webhook/sms`.
pub fn router(gw: Arc<Gateway>) -> Router {
    Router::new().route("/webhook/sms", post(webhook)).with_state(gw)
}
