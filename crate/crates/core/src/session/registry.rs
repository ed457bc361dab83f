use std::collections::HashMap;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use tokio::sync::watch;
use uuid::Uuid;

use crate::orchestrator::now_ms;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    Direct,
    Relayed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionToken {
    pub session_id: Uuid,
    pub instance_id: Uuid,
    pub issued_at_ms: u64,
    pub transport: Transport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SessionLookupError {
    #[error("TOKEN_REVOKED")]
    Revoked,
    #[error("EXPIRED")]
    Expired,
}

struct Entry {
    token: SessionToken,
    expires_at_ms: u64,
    revoked: bool,
    /// Bumped whenever a new connection attaches; older connections watch
    /// it and step aside.
    generation: watch::Sender<u64>,
}

/// Live sessions. Lookups, inserts and revocations may come from any task.
#[derive(Default)]
pub struct SessionRegistry {
    entries: RwLock<HashMap<Uuid, Entry>>,
}

/// Held by the connection currently serving a session.
pub struct Attachment {
    pub token: SessionToken,
    generation: u64,
    watch: watch::Receiver<u64>,
}

impl Attachment {
    /// Resolves once another connection takes over this session or the
    /// session is revoked.
    pub async fn superseded(&mut self) {
        loop {
            if *self.watch.borrow_and_update() != self.generation {
                return;
            }
            if self.watch.changed().await.is_err() {
                return;
            }
        }
    }
}

impl SessionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn issue(&self, instance_id: Uuid, transport: Transport, expires_at_ms: u64) -> SessionToken {
        let token = SessionToken {
            session_id: Uuid::new_v4(),
            instance_id,
            issued_at_ms: now_ms(),
            transport,
        };
        let (generation, _) = watch::channel(0);
        self.entries.write().expect("registry lock").insert(
            token.session_id,
            Entry {
                token: token.clone(),
                expires_at_ms,
                revoked: false,
                generation,
            },
        );
        token
    }

    /// Validates a session id without attaching to it.
    pub fn lookup(&self, session_id: Uuid) -> Result<SessionToken, SessionLookupError> {
        let entries = self.entries.read().expect("registry lock");
        let e = entries.get(&session_id).ok_or(SessionLookupError::Revoked)?;
        if e.revoked {
            return Err(SessionLookupError::Revoked);
        }
        if now_ms() >= e.expires_at_ms {
            return Err(SessionLookupError::Expired);
        }
        Ok(e.token.clone())
    }

    /// Makes the caller the active connection of the session, displacing
    /// any earlier one.
    pub fn attach(&self, session_id: Uuid, transport: Transport) -> Result<Attachment, SessionLookupError> {
        self.lookup(session_id)?;
        let mut entries = self.entries.write().expect("registry lock");
        let e = entries.get_mut(&session_id).ok_or(SessionLookupError::Revoked)?;
        e.token.transport = transport;
        let generation = *e.generation.borrow() + 1;
        e.generation.send_replace(generation);
        Ok(Attachment {
            token: e.token.clone(),
            generation,
            watch: e.generation.subscribe(),
        })
    }

    pub fn revoke(&self, session_id: Uuid) {
        if let Some(e) = self.entries.write().expect("registry lock").get_mut(&session_id) {
            e.revoked = true;
            e.generation.send_modify(|g| *g += 1);
        }
    }

    /// Revokes every session bound to `instance_id`; returns how many.
    pub fn revoke_instance(&self, instance_id: Uuid) -> usize {
        let mut n = 0;
        for e in self.entries.write().expect("registry lock").values_mut() {
            if e.token.instance_id == instance_id && !e.revoked {
                e.revoked = true;
                e.generation.send_modify(|g| *g += 1);
                n += 1;
            }
        }
        n
    }

    pub fn active_count(&self) -> usize {
        self.entries
            .read()
            .expect("registry lock")
            .values()
            .filter(|e| !e.revoked)
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[tokio::test]
    async fn second_attach_supersedes_first() {
        let reg = SessionRegistry::new();
        let t = reg.issue(Uuid::new_v4(), Transport::Direct, u64::MAX);
        let mut first = reg.attach(t.session_id, Transport::Direct).unwrap();
        let mut second = reg.attach(t.session_id, Transport::Relayed).unwrap();
        tokio::time::timeout(Duration::from_secs(1), first.superseded()).await.unwrap();
        assert!(tokio::time::timeout(Duration::from_millis(50), second.superseded()).await.is_err());
        assert_eq!(reg.lookup(t.session_id).unwrap().transport, Transport::Relayed);
    }

    #[tokio::test]
    async fn revocation_kicks_and_blocks() {
        let reg = SessionRegistry::new();
        let inst = Uuid::new_v4();
        let t = reg.issue(inst, Transport::Direct, u64::MAX);
        let other = reg.issue(Uuid::new_v4(), Transport::Direct, u64::MAX);
        let mut a = reg.attach(t.session_id, Transport::Direct).unwrap();
        assert_eq!(reg.revoke_instance(inst), 1);
        tokio::time::timeout(Duration::from_secs(1), a.superseded()).await.unwrap();
        assert_eq!(reg.attach(t.session_id, Transport::Direct).err(), Some(SessionLookupError::Revoked));
        assert!(reg.lookup(other.session_id).is_ok());
        assert_eq!(reg.lookup(Uuid::new_v4()).err(), Some(SessionLookupError::Revoked));
        assert_eq!(reg.active_count(), 1);
    }

    #[test]
    fn expired_session_is_refused() {
        let reg = SessionRegistry::new();
        let t = reg.issue(Uuid::new_v4(), Transport::Direct, 0);
        assert_eq!(reg.lookup(t.session_id).err(), Some(SessionLookupError::Expired));
    }
}
