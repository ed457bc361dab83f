//! Deterministic stand-in for a chat application: conversation state,
//! input handling, rendering and the simulated compromise.

pub mod font;
pub mod layout;
mod probe;
mod render;
mod state;

pub use probe::{
    run_compromised_probe, IsolationAuditReport, ProbeAction, ProbeError, ProbeOutcome,
    ProbeRecord, ProbeTargets, SiblingDigest,
};
pub use render::render;
pub use state::{
    ChatEvent, ChatMessage, ChatState, Conversation, Direction, InputOutcome, EXPLOIT_TRIGGER,
    LOCAL_SOURCE, MAX_BODY_BYTES,
};

/// Application names an instance may be bound to.
pub const REGISTERED_APPS: &[&str] = &["whatsapp", "signal", "sms"];
