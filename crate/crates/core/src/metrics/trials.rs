use std::future::Future;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::session::{ClientEvent, Notice, SessionClient, SessionError};
use crate::wire::{InputEvent, InputKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialOutcome {
    Successful,
    Failed,
    Retried,
    Terminated,
}

impl TrialOutcome {
    pub const ALL: [TrialOutcome; 4] = [
        TrialOutcome::Successful,
        TrialOutcome::Failed,
        TrialOutcome::Retried,
        TrialOutcome::Terminated,
    ];

    /// Row label as printed in the outcome table.
    pub fn label(self) -> &'static str {
        match self {
            TrialOutcome::Successful => "Successful",
            TrialOutcome::Failed => "Failed",
            TrialOutcome::Retried => "Re-tried",
            TrialOutcome::Terminated => "Terminated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionTrial {
    pub attempt_index: u32,
    pub outcome: TrialOutcome,
    pub duration_s: f64,
    pub frames: u64,
    pub inputs: u64,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub successful: u32,
    pub failed: u32,
    pub retried: u32,
    pub terminated: u32,
}

impl OutcomeCounts {
    pub fn get(&self, o: TrialOutcome) -> u32 {
        match o {
            TrialOutcome::Successful => self.successful,
            TrialOutcome::Failed => self.failed,
            TrialOutcome::Retried => self.retried,
            TrialOutcome::Terminated => self.terminated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoakReport {
    pub trials: Vec<ConnectionTrial>,
    pub network_label: String,
    pub client_label: String,
}

impl SoakReport {
    pub fn counts(&self) -> OutcomeCounts {
        let mut c = OutcomeCounts::default();
        for t in &self.trials {
            match t.outcome {
                TrialOutcome::Successful => c.successful += 1,
                TrialOutcome::Failed => c.failed += 1,
                TrialOutcome::Retried => c.retried += 1,
                TrialOutcome::Terminated => c.terminated += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone)]
pub struct TrialOptions {
    pub hold: Duration,
    /// Extra connection attempts before a trial is recorded as failed.
    pub retries: u32,
    pub retry_backoff: Duration,
    /// Send a harmless tap this often while holding.
    pub input_interval: Option<Duration>,
    /// Time allowed for the first keyframe after the handshake.
    pub first_frame_timeout: Duration,
    pub network_label: String,
    pub client_label: String,
}

impl Default for TrialOptions {
    fn default() -> Self {
        TrialOptions {
            hold: Duration::from_secs(2),
            retries: 1,
            retry_backoff: Duration::from_millis(500),
            input_interval: Some(Duration::from_secs(1)),
            first_frame_timeout: Duration::from_secs(5),
            network_label: "local".into(),
            client_label: "headless".into(),
        }
    }
}

enum Hold {
    Completed,
    Terminated(String),
}

/// Runs `n` sequential connect, hold, close cycles.
pub async fn run_connection_trials<F, Fut>(n: u32, mut factory: F, opts: &TrialOptions) -> SoakReport
where
    F: FnMut() -> Fut,
    Fut: Future<Output = Result<SessionClient, SessionError>>,
{
    let mut trials = Vec::with_capacity(n as usize);
    for attempt_index in 1..=n {
        let started = Instant::now();
        let mut tries = 0;
        let mut last_err = String::new();
        let mut client = None;
        while tries <= opts.retries {
            if tries > 0 {
                tokio::time::sleep(opts.retry_backoff).await;
            }
            tries += 1;
            match open(&mut factory, opts).await {
                Ok(c) => {
                    client = Some(c);
                    break;
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        let Some(mut client) = client else {
            trials.push(ConnectionTrial {
                attempt_index,
                outcome: TrialOutcome::Failed,
                duration_s: started.elapsed().as_secs_f64(),
                frames: 0,
                inputs: 0,
                detail: Some(last_err),
            });
            continue;
        };
        let (held, frames, inputs) = hold(&mut client, opts).await;
        client.close().await;
        let (outcome, detail) = match held {
            Hold::Terminated(why) => (TrialOutcome::Terminated, Some(why)),
            Hold::Completed if tries > 1 => (TrialOutcome::Retried, Some(last_err)),
            Hold::Completed => (TrialOutcome::Successful, None),
        };
        trials.push(ConnectionTrial {
            attempt_index,
            outcome,
            duration_s: started.elapsed().as_secs_f64(),
            frames,
            inputs,
            detail,
        });
    }
    SoakReport {
        trials,
        network_label: opts.network_label.clone(),
        client_label: opts.client_label.clone(),
    }
}

async fn open<F, Fut>(factory: &mut F, opts: &TrialOptions) -> Result<SessionClient, SessionError>
where
    F: FnMut() -> Fut,
    Fut: Future<Output = Result<SessionClient, SessionError>>,
{
    let mut c = factory().await?;
    c.next_frame(opts.first_frame_timeout).await?;
    Ok(c)
}

async fn hold(client: &mut SessionClient, opts: &TrialOptions) -> (Hold, u64, u64) {
    let deadline = tokio::time::Instant::now() + opts.hold;
    let mut frames = 1u64;
    let mut inputs = 0u64;
    let period = opts.input_interval.unwrap_or(opts.hold.max(Duration::from_secs(1)));
    let mut tick = tokio::time::interval_at(tokio::time::Instant::now() + period, period);
    loop {
        tokio::select! {
            _ = tokio::time::sleep_until(deadline) => return (Hold::Completed, frames, inputs),
            _ = tick.tick(), if opts.input_interval.is_some() => {
                inputs += 1;
                let ev = InputEvent {
                    seq: inputs as u32,
                    client_time_ms: client.clock_ms(),
                    kind: InputKind::Tap { x: 0, y: 0 },
                };
                if let Err(e) = client.send_input(&ev).await {
                    return (Hold::Terminated(format!("input send failed: {e}")), frames, inputs);
                }
            }
            ev = client.next_event() => match ev {
                Some(ClientEvent::Frame { .. }) => frames += 1,
                Some(ClientEvent::Notice(
                    n @ (Notice::Terminated | Notice::Revoked | Notice::Superseded | Notice::InstanceDown),
                )) => return (Hold::Terminated(format!("{n:?}")), frames, inputs),
                Some(ClientEvent::Closed) | None => {
                    return (Hold::Terminated("connection closed".into()), frames, inputs)
                }
                Some(_) => {}
            },
        }
    }
}
