//! Simulated post-exploitation behaviour of a compromised instance.
//!
//! Runs inside the instance process and attempts the actions a zero-click
//! payload would try next. Each attempt uses plain OS calls; whether it
//! succeeds depends only on the confinement the process was launched with.

use std::fmt;
use std::io::Write;
use std::net::{SocketAddr, TcpStream};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::state::ChatState;
use crate::instance::proto::{self, Message, Request, Response};

const NET_TIMEOUT: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeAction {
    ReadSiblingDir,
    ConnectSiblingControl,
    EscapeWrite,
    Exfiltrate,
}

impl fmt::Display for ProbeAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbeAction::ReadSiblingDir => "read-sibling",
            ProbeAction::ConnectSiblingControl => "connect-sibling",
            ProbeAction::EscapeWrite => "escape-write",
            ProbeAction::Exfiltrate => "exfiltrate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProbeOutcome {
    Denied,
    Allowed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub action: ProbeAction,
    pub target: String,
    pub outcome: ProbeOutcome,
    pub evidence: String,
}

/// What the attacker is assumed to know about its neighbours.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeTargets {
    pub sibling_dirs: Vec<PathBuf>,
    pub sibling_controls: Vec<SocketAddr>,
    pub escape_paths: Vec<PathBuf>,
    pub exfil_addr: Option<SocketAddr>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsolationAuditReport {
    pub instance_id: Option<uuid::Uuid>,
    /// Confinement the probed process reported at startup.
    pub enforcement: String,
    pub records: Vec<ProbeRecord>,
    /// Sibling state digests before and after the probe, keyed by instance.
    #[serde(default)]
    pub sibling_digests: Vec<SiblingDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiblingDigest {
    pub instance_id: uuid::Uuid,
    pub before: String,
    pub after: String,
}

impl IsolationAuditReport {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn outcomes(&self, action: ProbeAction) -> impl Iterator<Item = &ProbeRecord> {
        self.records.iter().filter(move |r| r.action == action)
    }

    /// Actions (a)-(c) were all attempted and all denied.
    pub fn confinement_held(&self) -> bool {
        [
            ProbeAction::ReadSiblingDir,
            ProbeAction::ConnectSiblingControl,
            ProbeAction::EscapeWrite,
        ]
        .iter()
        .all(|a| {
            let mut it = self.outcomes(*a).peekable();
            it.peek().is_some() && it.all(|r| r.outcome == ProbeOutcome::Denied)
        })
    }

    pub fn siblings_unchanged(&self) -> bool {
        self.sibling_digests.iter().all(|d| d.before == d.after)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("instance is not compromised")]
    NotCompromised,
}

fn record(action: ProbeAction, target: impl fmt::Display, ok: Result<String, String>) -> ProbeRecord {
    let (outcome, evidence) = match ok {
        Ok(e) => (ProbeOutcome::Allowed, e),
        Err(e) => (ProbeOutcome::Denied, e),
    };
    ProbeRecord {
        action,
        target: target.to_string(),
        outcome,
        evidence,
    }
}

fn try_read_dir(dir: &Path) -> Result<String, String> {
    let listing = std::fs::read_dir(dir).map(|rd| rd.count());
    let log = std::fs::read(dir.join(crate::instance::EVENT_LOG));
    match (listing, log) {
        (Err(a), Err(b)) => Err(format!("read_dir: {a}; read log: {b}")),
        (Ok(n), _) => Ok(format!("listed {n} entries")),
        (_, Ok(bytes)) => Ok(format!("read {} log bytes", bytes.len())),
    }
}

fn try_sibling_control(addr: SocketAddr) -> Result<String, String> {
    let mut stream =
        TcpStream::connect_timeout(&addr, NET_TIMEOUT).map_err(|e| format!("connect: {e}"))?;
    stream.set_read_timeout(Some(NET_TIMEOUT)).ok();
    // without the sibling's secret the best an attacker can do is guess one
    let forged = hex::encode(rand::random::<[u8; 32]>());
    proto::write_sync(&mut stream, &proto::encode_json(&Request::Hello { secret: forged }))
        .map_err(|e| format!("write: {e}"))?;
    match proto::read_message_sync(&mut stream) {
        Ok(Some(Message::Json(body))) => match proto::decode_response(&body) {
            Ok(Response::Welcome { .. }) => Ok("control session accepted".into()),
            Ok(Response::Error { code, .. }) => Err(format!("rejected: {code}")),
            Ok(other) => Err(format!("unexpected reply {other:?}")),
            Err(e) => Err(format!("garbled reply: {e}")),
        },
        Ok(Some(Message::Frame { .. })) => Ok("received a frame".into()),
        Ok(None) => Err("closed by peer".into()),
        Err(e) => Err(format!("read: {e}")),
    }
}

fn try_escape_write(path: &Path) -> Result<String, String> {
    std::fs::write(path, b"escaped")
        .map(|_| format!("wrote {}", path.display()))
        .map_err(|e| format!("write: {e}"))
}

fn try_exfil(addr: SocketAddr) -> Result<TcpStream, String> {
    let mut s = TcpStream::connect_timeout(&addr, NET_TIMEOUT).map_err(|e| format!("connect: {e}"))?;
    s.write_all(b"EXFIL\n").map_err(|e| format!("write: {e}"))?;
    Ok(s)
}

/// Attempts the forbidden actions. On success of the exfiltration attempt
/// the open socket is returned so the caller can keep it alive.
pub fn run_compromised_probe(
    state: &ChatState,
    targets: &ProbeTargets,
) -> Result<(IsolationAuditReport, Option<TcpStream>), ProbeError> {
    if !state.compromised {
        return Err(ProbeError::NotCompromised);
    }
    let mut records = Vec::new();
    for dir in &targets.sibling_dirs {
        records.push(record(ProbeAction::ReadSiblingDir, dir.display(), try_read_dir(dir)));
    }
    for addr in &targets.sibling_controls {
        records.push(record(
            ProbeAction::ConnectSiblingControl,
            addr,
            try_sibling_control(*addr),
        ));
    }
    for path in &targets.escape_paths {
        records.push(record(ProbeAction::EscapeWrite, path.display(), try_escape_write(path)));
    }
    let mut exfil = None;
    if let Some(addr) = targets.exfil_addr {
        let r = try_exfil(addr).map(|s| {
            exfil = Some(s);
            "connection open".to_string()
        });
        records.push(record(ProbeAction::Exfiltrate, addr, r));
    }
    Ok((
        IsolationAuditReport {
            instance_id: None,
            enforcement: String::new(),
            records,
            sibling_digests: Vec::new(),
        },
        exfil,
    ))
}
