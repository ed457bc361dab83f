use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layout;
use crate::wire::{InputEvent, InputKind, KEY_BACKSPACE, KEY_ENTER};

/// Longest body accepted anywhere (ten concatenated SMS segments).
pub const MAX_BODY_BYTES: usize = 1600;

/// Prefix that flips an instance into the compromised state on receipt.
pub const EXPLOIT_TRIGGER: &str = "EXPLOIT:";

/// Input source used by [`ChatState::apply_input`].
pub const LOCAL_SOURCE: &str = "local";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Inbound,
    Outbound,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    /// Counterpart number: the sender of an inbound message, the recipient
    /// of an outbound one.
    pub sender: String,
    pub body: String,
    pub received_at: u64,
    pub direction: Direction,
    #[serde(default)]
    pub no_preview: bool,
}

impl ChatMessage {
    pub fn inbound(sender: impl Into<String>, body: impl Into<String>, received_at: u64) -> Self {
        ChatMessage {
            sender: sender.into(),
            body: body.into(),
            received_at,
            direction: Direction::Inbound,
            no_preview: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub peer: String,
    pub messages: Vec<ChatMessage>,
}

/// One line of the instance event log. Replaying the log from an empty
/// state reproduces the live state exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
pub enum ChatEvent {
    Message { msg: ChatMessage },
    Input { source: String, event: InputEvent },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatState {
    pub app: String,
    pub conversations: Vec<Conversation>,
    pub active_index: usize,
    pub compose_buffer: String,
    pub compromised: bool,
    pub revision: u64,
    /// Highest input seq applied per source; lower or equal seqs are no-ops.
    pub last_seq: BTreeMap<String, u32>,
}

/// What applying an input produced, besides the state change.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InputOutcome {
    pub applied: bool,
    pub outbound: Option<ChatMessage>,
}

impl ChatState {
    pub fn new(app: impl Into<String>) -> Self {
        ChatState {
            app: app.into(),
            conversations: Vec::new(),
            active_index: 0,
            compose_buffer: String::new(),
            compromised: false,
            revision: 0,
            last_seq: BTreeMap::new(),
        }
    }

    pub fn active(&self) -> Option<&Conversation> {
        self.conversations.get(self.active_index)
    }

    /// Appends an inbound message to its sender's conversation. Never fails:
    /// untrusted content is stored as-is (bounded) and sanitised at render.
    pub fn ingest_message(&mut self, mut msg: ChatMessage) {
        truncate_utf8(&mut msg.body, MAX_BODY_BYTES);
        if msg.body.starts_with(EXPLOIT_TRIGGER) {
            self.compromised = true;
        }
        let idx = match self.conversations.iter().position(|c| c.peer == msg.sender) {
            Some(i) => i,
            None => {
                self.conversations.push(Conversation {
                    peer: msg.sender.clone(),
                    messages: Vec::new(),
                });
                self.conversations.len() - 1
            }
        };
        self.conversations[idx].messages.push(msg);
        self.revision += 1;
    }

    pub fn apply_input(&mut self, event: &InputEvent) -> InputOutcome {
        self.apply_input_from(LOCAL_SOURCE, event)
    }

    /// Applies an input event from `source`. Events whose seq is not above
    /// the last one seen from that source are dropped.
    pub fn apply_input_from(&mut self, source: &str, event: &InputEvent) -> InputOutcome {
        if let Some(last) = self.last_seq.get(source) {
            if event.seq <= *last {
                return InputOutcome::default();
            }
        }
        self.last_seq.insert(source.to_owned(), event.seq);
        let mut outbound = None;
        match &event.kind {
            InputKind::Text { text } => {
                self.compose_buffer.push_str(text);
                truncate_utf8(&mut self.compose_buffer, MAX_BODY_BYTES);
            }
            InputKind::Key {
                keycode: KEY_ENTER,
                pressed: true,
            } => {
                if !self.compose_buffer.is_empty() {
                    if let Some(conv) = self.conversations.get_mut(self.active_index) {
                        let msg = ChatMessage {
                            sender: conv.peer.clone(),
                            body: std::mem::take(&mut self.compose_buffer),
                            received_at: event.client_time_ms,
                            direction: Direction::Outbound,
                            no_preview: false,
                        };
                        conv.messages.push(msg.clone());
                        outbound = Some(msg);
                    }
                }
            }
            InputKind::Key {
                keycode: KEY_BACKSPACE,
                pressed: true,
            } => {
                self.compose_buffer.pop();
            }
            InputKind::Key { .. } => {}
            InputKind::Tap { x, y } => {
                if let Some(row) = layout::list_row_at(*x, *y) {
                    let idx = layout::list_window_start(self.active_index) + row;
                    if idx < self.conversations.len() {
                        self.active_index = idx;
                    }
                }
            }
            InputKind::Swipe { y1, y2, .. } => {
                // vertical swipe across the list steps the selection
                if !self.conversations.is_empty() {
                    if y2 > y1 && self.active_index + 1 < self.conversations.len() {
                        self.active_index += 1;
                    } else if y2 < y1 && self.active_index > 0 {
                        self.active_index -= 1;
                    }
                }
            }
        }
        self.revision += 1;
        InputOutcome {
            applied: true,
            outbound,
        }
    }

    /// Applies a logged event; returns the outbound message an input produced.
    pub fn apply(&mut self, event: &ChatEvent) -> InputOutcome {
        match event {
            ChatEvent::Message { msg } => {
                self.ingest_message(msg.clone());
                InputOutcome {
                    applied: true,
                    outbound: None,
                }
            }
            ChatEvent::Input { source, event } => self.apply_input_from(source, event),
        }
    }

    pub fn replay<'a>(app: &str, log: impl IntoIterator<Item = &'a ChatEvent>) -> Self {
        let mut state = ChatState::new(app);
        for ev in log {
            state.apply(ev);
        }
        state
    }

    /// SHA-256 over the canonical JSON form.
    pub fn digest(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("state serialises");
        Sha256::digest(&json).into()
    }
}

fn truncate_utf8(s: &mut String, max: usize) {
    if s.len() <= max {
        return;
    }
    let mut cut = max;
    while !s.is_char_boundary(cut) {
        cut -= 1;
    }
    s.truncate(cut);
}
