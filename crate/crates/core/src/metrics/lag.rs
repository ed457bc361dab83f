use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::session::{ClientEvent, Notice, SessionClient, SessionError};

/// Probes unanswered after this long count as losses.
pub const DEFAULT_PROBE_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagSample {
    pub probe_id: u32,
    /// Client clock when the probe left.
    pub sent_at_ms: u64,
    pub rtt_ms: f64,
    pub lag_ms: f64,
}

impl LagSample {
    pub fn new(probe_id: u32, sent_at_ms: u64, rtt_ms: f64) -> Self {
        let rtt_ms = rtt_ms.max(0.0);
        LagSample {
            probe_id,
            sent_at_ms,
            rtt_ms,
            lag_ms: rtt_ms / 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagReport {
    pub samples: Vec<LagSample>,
    /// `None` when there are no samples.
    pub mean_lag_s: Option<f64>,
    pub losses: u32,
    pub network_label: String,
    pub client_label: String,
}

impl LagReport {
    pub fn new(samples: Vec<LagSample>, losses: u32, network: &str, client: &str) -> Self {
        let mut r = LagReport {
            samples,
            mean_lag_s: None,
            losses,
            network_label: network.to_string(),
            client_label: client.to_string(),
        };
        r.mean_lag_s = r.recompute_mean();
        r
    }

    pub fn recompute_mean(&self) -> Option<f64> {
        if self.samples.is_empty() {
            return None;
        }
        let sum: f64 = self.samples.iter().map(|s| s.lag_ms).sum();
        Some(sum / self.samples.len() as f64 / 1000.0)
    }

    pub fn mean_lag_ms(&self) -> Option<f64> {
        self.mean_lag_s.map(|s| s * 1000.0)
    }

    /// Sample standard deviation of lag, in ms.
    pub fn lag_stddev_ms(&self) -> Option<f64> {
        let n = self.samples.len();
        if n < 2 {
            return None;
        }
        let mean = self.samples.iter().map(|s| s.lag_ms).sum::<f64>() / n as f64;
        let var = self.samples.iter().map(|s| (s.lag_ms - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Some(var.sqrt())
    }
}

#[derive(Debug, Clone)]
pub struct ProbeOptions {
    pub rate_hz: f64,
    pub duration: Duration,
    pub timeout: Duration,
    pub network_label: String,
    pub client_label: String,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            rate_hz: 10.0,
            duration: Duration::from_secs(10),
            timeout: DEFAULT_PROBE_TIMEOUT,
            network_label: "local".into(),
            client_label: "headless".into(),
        }
    }
}

impl ProbeOptions {
    pub fn with_duration(mut self, d: Duration) -> Self {
        self.duration = d;
        self
    }

    pub fn with_labels(mut self, network: &str, client: &str) -> Self {
        self.network_label = network.into();
        self.client_label = client.into();
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LagError {
    #[error("session down")]
    SessionDown,
    #[error("rate must be positive")]
    BadRate,
}

impl LagError {
    pub fn code(&self) -> &'static str {
        match self {
            LagError::SessionDown => "SESSION_DOWN",
            LagError::BadRate => "BAD_RATE",
        }
    }
}

impl From<SessionError> for LagError {
    fn from(_: SessionError) -> Self {
        LagError::SessionDown
    }
}

/// Sends probes at `rate_hz` for `duration` over the session's control
/// channel and collects half-RTT samples from the acks.
pub async fn run_lag_probe(client: &mut SessionClient, opts: &ProbeOptions) -> Result<LagReport, LagError> {
    if !opts.rate_hz.is_finite() || opts.rate_hz <= 0.0 {
        return Err(LagError::BadRate);
    }
    let period = Duration::from_secs_f64(1.0 / opts.rate_hz);
    let start = tokio::time::Instant::now();
    // client clock at `start`, to map probe stamps onto tokio time
    let offset = client.clock_ms();
    let send_until = start + opts.duration;
    let mut tick = tokio::time::interval_at(start, period);
    tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Burst);

    let timeout_ms = opts.timeout.as_millis() as u64;
    let mut pending: BTreeMap<u32, u64> = BTreeMap::new();
    let mut samples = Vec::new();
    let mut losses = 0u32;
    let mut next_id = 0u32;
    let mut sending = !opts.duration.is_zero();

    loop {
        if !sending && pending.is_empty() {
            break;
        }
        let expire_at = pending
            .values()
            .next()
            .map(|&sent| start + Duration::from_millis(sent.saturating_sub(offset) + timeout_ms));
        tokio::select! {
            _ = tick.tick(), if sending => {
                if tokio::time::Instant::now() >= send_until {
                    sending = false;
                    continue;
                }
                let p = client.send_probe(next_id).await?;
                pending.insert(next_id, p.client_time_ms);
                next_id = next_id.wrapping_add(1);
            }
            ev = client.next_event() => match ev {
                Some(ClientEvent::ProbeAck { packet, received_ms }) => {
                    if pending.remove(&packet.probe_id).is_some() {
                        let rtt = received_ms.saturating_sub(packet.client_time_ms);
                        if rtt <= timeout_ms {
                            samples.push(LagSample::new(packet.probe_id, packet.client_time_ms, rtt as f64));
                        } else {
                            losses += 1;
                        }
                    }
                }
                Some(ClientEvent::Notice(Notice::Terminated | Notice::Revoked | Notice::Superseded))
                | Some(ClientEvent::Closed)
                | None => return Err(LagError::SessionDown),
                Some(_) => {}
            },
            _ = sleep_until_opt(expire_at) => {
                let now = client.clock_ms();
                let before = pending.len();
                pending.retain(|_, sent| now.saturating_sub(*sent) < timeout_ms);
                losses += (before - pending.len()) as u32;
            }
        }
    }
    samples.sort_by_key(|s| s.sent_at_ms);
    Ok(LagReport::new(samples, losses, &opts.network_label, &opts.client_label))
}

async fn sleep_until_opt(at: Option<tokio::time::Instant>) {
    match at {
        Some(at) => tokio::time::sleep_until(at).await,
        None => std::future::pending().await,
    }
}
