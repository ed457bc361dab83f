//! Authenticated sessions between a client and one instance: handshake,
//! the multiplexed frame/input/control stream, the relay for clients that
//! cannot reach the server directly, and the PNG snapshot fallback.

mod auth;
mod client;
mod http;
pub mod relay;
mod registry;
mod server;

use serde::{Deserialize, Serialize};
use uuid::Uuid;

pub use auth::{random_token, AuthError, Credential, CredentialStore, Login};
pub use client::{ClientEvent, ConnectOptions, RelayRoute, SessionClient, SessionError};
pub use http::{router as http_router, SnapshotError};
pub use registry::{Attachment, SessionLookupError, SessionRegistry, SessionToken, Transport};
pub use server::{OutboundChat, SessionConfig, SessionService};

/// Channels a client asks for at the handshake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Want {
    Frames,
    Input,
    Control,
}

pub const ALL_CHANNELS: [Want; 3] = [Want::Frames, Want::Input, Want::Control];

/// First line a client sends, newline-terminated JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Hello {
    Login {
        credential: Login,
        instance: Uuid,
        #[serde(default)]
        want: Vec<Want>,
    },
    Resume {
        session: Uuid,
        #[serde(default)]
        want: Vec<Want>,
    },
}

impl Hello {
    pub fn login(cred: &Credential, instance: Uuid) -> Self {
        Hello::Login {
            credential: cred.into(),
            instance,
            want: ALL_CHANNELS.to_vec(),
        }
    }

    pub fn resume(session: Uuid) -> Self {
        Hello::Resume {
            session,
            want: ALL_CHANNELS.to_vec(),
        }
    }

    pub fn with_want(mut self, channels: &[Want]) -> Self {
        match &mut self {
            Hello::Login { want, .. } | Hello::Resume { want, .. } => *want = channels.to_vec(),
        }
        self
    }

    pub fn want(&self) -> &[Want] {
        match self {
            Hello::Login { want, .. } | Hello::Resume { want, .. } => want,
        }
    }
}

/// Server's reply line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelloReply {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<Uuid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<Uuid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport: Option<Transport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<u32>,
}

impl HelloReply {
    pub fn error(code: &str) -> Self {
        HelloReply {
            ok: false,
            error: Some(code.to_owned()),
            session_id: None,
            instance: None,
            transport: None,
            fps: None,
        }
    }
}

/// Server-to-client notices on the control channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Notice {
    /// The instance is being restored; frames pause.
    Resetting,
    /// The instance came back pristine; the next frame is a keyframe.
    Reset { count: u64 },
    /// The instance was destroyed; the connection closes.
    Terminated,
    /// The session was revoked; the connection closes.
    Revoked,
    /// Another connection took over this session.
    Superseded,
    InstanceDown,
    Error { code: String },
}

/// Client-to-server control requests (besides probe packets).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ControlRequest {
    /// Ask for a keyframe, e.g. after a local decode error.
    Keyframe,
}
