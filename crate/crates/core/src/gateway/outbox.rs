//! Outbound leg: instance-originated messages to the external SMS gateway.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;
use tokio::task::JoinHandle;
use uuid::Uuid;

use crate::session::OutboundChat;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutboundRequest {
    pub to: String,
    pub body: String,
    pub idempotency_key: Uuid,
}

impl OutboundRequest {
    pub fn new(to: impl Into<String>, body: impl Into<String>) -> Self {
        OutboundRequest {
            to: to.into(),
            body: body.into(),
            idempotency_key: Uuid::new_v4(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryReceipt {
    pub idempotency_key: Uuid,
    /// Gateway's own message id, when it returned one.
    #[serde(default)]
    pub gateway_id: Option<String>,
    pub attempts: u32,
}

#[derive(Debug, Clone)]
pub struct OutboxConfig {
    pub gateway_url: String,
    pub token: String,
    pub attempts: u32,
    pub base_backoff: Duration,
    pub timeout: Duration,
}

impl OutboxConfig {
    pub fn new(gateway_url: impl Into<String>, token: impl Into<String>) -> Self {
        OutboxConfig {
            gateway_url: gateway_url.into(),
            token: token.into(),
            attempts: 3,
            base_backoff: Duration::from_millis(100),
            timeout: Duration::from_secs(5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OutboxError {
    #[error("GATEWAY_UNREACHABLE after {attempts} attempts: {last}")]
    GatewayUnreachable { attempts: u32, last: String },
    #[error("gateway rejected request with status {0}")]
    Rejected(u16),
}

#[derive(Deserialize)]
struct SendReply {
    #[serde(default)]
    id: Option<String>,
}

pub struct Outbox {
    http: reqwest::Client,
    config: OutboxConfig,
    receipts: Mutex<HashMap<Uuid, DeliveryReceipt>>,
    parked: Mutex<Vec<OutboundRequest>>,
    /// Serialises sends so a key is never in flight twice.
    sending: tokio::sync::Mutex<()>,
}

enum Attempt {
    Done(Option<String>),
    Retry(String),
    Fatal(u16),
}

impl Outbox {
    pub fn new(config: OutboxConfig) -> Arc<Self> {
        let http = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .expect("http client builds");
        Arc::new(Outbox {
            http,
            config,
            receipts: Mutex::new(HashMap::new()),
            parked: Mutex::new(Vec::new()),
            sending: tokio::sync::Mutex::new(()),
        })
    }

    pub fn receipt(&self, key: Uuid) -> Option<DeliveryReceipt> {
        self.receipts.lock().expect("receipt lock").get(&key).cloned()
    }

    pub fn parked(&self) -> Vec<OutboundRequest> {
        self.parked.lock().expect("park lock").clone()
    }

    async fn attempt(&self, req: &OutboundRequest) -> Attempt {
        let url = format!("{}/send", self.config.gateway_url.trim_end_matches('/'));
        let resp = self
            .http
            .post(url)
            .bearer_auth(&self.config.token)
            .json(req)
            .send()
            .await;
        match resp {
            Ok(r) if r.status().is_success() => {
                let id = r.json::<SendReply>().await.ok().and_then(|b| b.id);
                Attempt::Done(id)
            }
            Ok(r) if r.status().is_server_error() => Attempt::Retry(format!("status {}", r.status())),
            Ok(r) => Attempt::Fatal(r.status().as_u16()),
            Err(e) => Attempt::Retry(e.to_string()),
        }
    }

    /// Sends with up to `attempts` tries and exponential backoff on 5xx or
    /// transport errors. A key that already has a receipt is not sent again.
    /// On exhaustion the request is parked for [`Outbox::flush`].
    pub async fn send(&self, req: OutboundRequest) -> Result<DeliveryReceipt, OutboxError> {
        let _g = self.sending.lock().await;
        if let Some(r) = self.receipt(req.idempotency_key) {
            return Ok(r);
        }
        let mut last = String::new();
        for i in 0..self.config.attempts.max(1) {
            if i > 0 {
                tokio::time::sleep(self.config.base_backoff * 2u32.pow(i - 1)).await;
            }
            match self.attempt(&req).await {
                Attempt::Done(gateway_id) => {
                    let receipt = DeliveryReceipt {
                        idempotency_key: req.idempotency_key,
                        gateway_id,
                        attempts: i + 1,
                    };
                    self.receipts
                        .lock()
                        .expect("receipt lock")
                        .insert(req.idempotency_key, receipt.clone());
                    self.parked
                        .lock()
                        .expect("park lock")
                        .retain(|p| p.idempotency_key != req.idempotency_key);
                    return Ok(receipt);
                }
                Attempt::Retry(e) => last = e,
                Attempt::Fatal(status) => return Err(OutboxError::Rejected(status)),
            }
        }
        let mut parked = self.parked.lock().expect("park lock");
        if !parked.iter().any(|p| p.idempotency_key == req.idempotency_key) {
            parked.push(req);
        }
        Err(OutboxError::GatewayUnreachable {
            attempts: self.config.attempts.max(1),
            last,
        })
    }

    /// Retries everything parked; returns how many went out.
    pub async fn flush(&self) -> usize {
        let pending = self.parked();
        let mut sent = 0;
        for req in pending {
            if self.send(req).await.is_ok() {
                sent += 1;
            }
        }
        sent
    }

    /// Single background worker: sends messages as they arrive and retries
    /// parked ones every `flush_every`.
    pub fn spawn_worker(
        self: &Arc<Self>,
        mut rx: mpsc::UnboundedReceiver<OutboundChat>,
        flush_every: Duration,
    ) -> JoinHandle<()> {
        let outbox = self.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(flush_every);
            tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                tokio::select! {
                    msg = rx.recv() => {
                        let Some(OutboundChat { instance_id, message }) = msg else { break };
                        let req = OutboundRequest::new(message.sender, message.body);
                        if let Err(e) = outbox.send(req).await {
                            tracing::warn!(%instance_id, "outbound send: {e}");
                        }
                    }
                    _ = tick.tick() => {
                        if !outbox.parked().is_empty() {
                            outbox.flush().await;
                        }
                    }
                }
            }
        })
    }
}
