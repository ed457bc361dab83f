//! Temporary login credentials, each bound to one instance.

use std::collections::HashMap;
use std::sync::RwLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uuid::Uuid;

use crate::orchestrator::now_ms;

/// Failures before a warning is logged for a username. There is no lockout.
const FAILURE_LOG_THRESHOLD: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credential {
    pub username: String,
    /// 32 random bytes, hex.
    pub token: String,
    pub expires_at_ms: u64,
}

/// What a client presents at the handshake.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Login {
    pub username: String,
    pub token: String,
}

impl From<&Credential> for Login {
    fn from(c: &Credential) -> Self {
        Login {
            username: c.username.clone(),
            token: c.token.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum AuthError {
    #[error("AUTH_FAILED")]
    AuthFailed,
    #[error("EXPIRED")]
    Expired,
}

struct Entry {
    token_hash: [u8; 32],
    expires_at_ms: u64,
    instance: Uuid,
    failures: u32,
}

#[derive(Default)]
pub struct CredentialStore {
    entries: RwLock<HashMap<String, Entry>>,
}

fn hash(token: &str) -> [u8; 32] {
    Sha256::digest(token.as_bytes()).into()
}

fn ct_eq(a: &[u8; 32], b: &[u8; 32]) -> bool {
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

pub fn random_token() -> String {
    hex::encode(rand::random::<[u8; 32]>())
}

impl CredentialStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Issues a fresh credential for `instance`, replacing any previous
    /// credential under the same username.
    pub fn issue(&self, username: &str, instance: Uuid, ttl: Duration) -> Credential {
        let cred = Credential {
            username: username.to_owned(),
            token: random_token(),
            expires_at_ms: now_ms() + ttl.as_millis() as u64,
        };
        self.insert(&cred, instance);
        cred
    }

    pub fn insert(&self, cred: &Credential, instance: Uuid) {
        self.entries.write().expect("credential lock").insert(
            cred.username.clone(),
            Entry {
                token_hash: hash(&cred.token),
                expires_at_ms: cred.expires_at_ms,
                instance,
                failures: 0,
            },
        );
    }

    pub fn revoke(&self, username: &str) {
        self.entries.write().expect("credential lock").remove(username);
    }

    /// Checks a login against the instance it asks for. Unknown user, wrong
    /// token and wrong instance all give the same `AuthFailed`; `Expired`
    /// is only reported once the token itself has matched.
    pub fn authenticate(&self, login: &Login, instance: Uuid) -> Result<(), AuthError> {
        let presented = hash(&login.token);
        let mut entries = self.entries.write().expect("credential lock");
        let Some(e) = entries.get_mut(&login.username) else {
            // same work as the found path
            let _ = ct_eq(&presented, &[0u8; 32]);
            return Err(AuthError::AuthFailed);
        };
        if !ct_eq(&presented, &e.token_hash) {
            e.failures += 1;
            if e.failures >= FAILURE_LOG_THRESHOLD {
                tracing::warn!(username = %login.username, failures = e.failures, "repeated login failures");
            }
            return Err(AuthError::AuthFailed);
        }
        if e.instance != instance {
            return Err(AuthError::AuthFailed);
        }
        if now_ms() >= e.expires_at_ms {
            return Err(AuthError::Expired);
        }
        e.failures = 0;
        Ok(())
    }

    pub fn expires_at_ms(&self, username: &str) -> Option<u64> {
        self.entries
            .read()
            .expect("credential lock")
            .get(username)
            .map(|e| e.expires_at_ms)
    }

    pub fn failures(&self, username: &str) -> u32 {
        self.entries
            .read()
            .expect("credential lock")
            .get(username)
            .map_or(0, |e| e.failures)
    }
}
