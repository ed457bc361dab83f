//! Control protocol between the orchestrator (or a session) and an instance
//! process.
//!
//! Each message is `[len u32 BE][kind u8][body]` where `len` counts
//! `kind + body`. Kind `J` carries a JSON [`Request`] or [`Response`]; kind
//! `F` carries a rendered frame: `width u16 | height u16 | orientation u8 |
//! revision u64 | RGBA pixels`. The first request on every connection must
//! be `hello` with the instance secret.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};

use crate::app::{ChatMessage, IsolationAuditReport, ProbeTargets};
use crate::wire::{Framebuffer, InputEvent, Orientation};

pub const KIND_JSON: u8 = b'J';
pub const KIND_FRAME: u8 = b'F';
const MAX_MESSAGE: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Hello { secret: String },
    Deliver { msg: ChatMessage },
    Input { source: String, event: InputEvent },
    Render,
    State,
    Probe { targets: ProbeTargets },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "r", rename_all = "snake_case")]
pub enum Response {
    Welcome {
        app: String,
        revision: u64,
        enforcement: String,
    },
    Ack {
        revision: u64,
        applied: bool,
        outbound: Option<ChatMessage>,
    },
    State(InstanceStatus),
    Probe {
        report: IsolationAuditReport,
    },
    Error {
        code: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceStatus {
    pub app: String,
    pub revision: u64,
    pub digest: String,
    pub compromised: bool,
    pub conversations: usize,
    pub log_entries: u64,
    pub open_exfil: usize,
}

#[derive(Debug)]
pub enum Message {
    Json(Vec<u8>),
    Frame { revision: u64, frame: Framebuffer },
}

pub fn encode_json<T: Serialize>(value: &T) -> Vec<u8> {
    let body = serde_json::to_vec(value).expect("protocol types serialise");
    frame_bytes(KIND_JSON, &[&body])
}

pub fn encode_frame_message(revision: u64, fb: &Framebuffer) -> Vec<u8> {
    let mut head = Vec::with_capacity(13);
    head.extend_from_slice(&fb.width().to_be_bytes());
    head.extend_from_slice(&fb.height().to_be_bytes());
    head.push(fb.orientation().to_byte());
    head.extend_from_slice(&revision.to_be_bytes());
    frame_bytes(KIND_FRAME, &[&head, fb.pixels()])
}

fn frame_bytes(kind: u8, parts: &[&[u8]]) -> Vec<u8> {
    let len: usize = 1 + parts.iter().map(|p| p.len()).sum::<usize>();
    let mut out = Vec::with_capacity(4 + len);
    out.extend_from_slice(&(len as u32).to_be_bytes());
    out.push(kind);
    for p in parts {
        out.extend_from_slice(p);
    }
    out
}

fn parse(kind: u8, body: Vec<u8>) -> std::io::Result<Message> {
    match kind {
        KIND_JSON => Ok(Message::Json(body)),
        KIND_FRAME => {
            if body.len() < 13 {
                return Err(invalid("short frame message"));
            }
            let w = u16::from_be_bytes([body[0], body[1]]);
            let h = u16::from_be_bytes([body[2], body[3]]);
            let orientation = Orientation::from_byte(body[4]).map_err(|e| invalid(&e.to_string()))?;
            let revision = u64::from_be_bytes(body[5..13].try_into().unwrap());
            let frame = Framebuffer::new(w, h, orientation, body[13..].to_vec())
                .map_err(|e| invalid(&e.to_string()))?;
            Ok(Message::Frame { revision, frame })
        }
        _ => Err(invalid("unknown message kind")),
    }
}

fn invalid(msg: &str) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_owned())
}

fn check_len(len: usize) -> std::io::Result<()> {
    if len == 0 || len > MAX_MESSAGE {
        return Err(invalid("bad message length"));
    }
    Ok(())
}

pub fn read_message_sync<R: Read>(r: &mut R) -> std::io::Result<Option<Message>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    check_len(len)?;
    let mut buf = vec![0; len];
    r.read_exact(&mut buf)?;
    let kind = buf.remove(0);
    parse(kind, buf).map(Some)
}

pub fn write_sync<W: Write>(w: &mut W, bytes: &[u8]) -> std::io::Result<()> {
    w.write_all(bytes)?;
    w.flush()
}

pub async fn read_message<R: AsyncRead + Unpin>(r: &mut R) -> std::io::Result<Option<Message>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len).await {
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    check_len(len)?;
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind).await?;
    let mut buf = vec![0; len - 1];
    r.read_exact(&mut buf).await?;
    parse(kind[0], buf).map(Some)
}

pub async fn write_async<W: AsyncWrite + Unpin>(w: &mut W, bytes: &[u8]) -> std::io::Result<()> {
    w.write_all(bytes).await?;
    w.flush().await
}

pub fn decode_response(body: &[u8]) -> std::io::Result<Response> {
    serde_json::from_slice(body).map_err(|e| invalid(&e.to_string()))
}
