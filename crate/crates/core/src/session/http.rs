//! HTTP surface of the session service: PNG snapshots, login for browser
//! clients, and the WebSocket bridge onto the native stream.

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use uuid::Uuid;

use super::{Hello, HelloReply, SessionService, Transport};
use crate::wire::{encode_unit, read_unit, ChannelTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SnapshotError {
    #[error("unknown or revoked session")]
    Unauthorized,
    #[error("instance unavailable")]
    Unavailable,
}

#[derive(Deserialize)]
struct SessionQuery {
    session: Option<String>,
}

fn parse_session(q: &SessionQuery) -> Option<Uuid> {
    q.session.as_deref().and_then(|s| s.parse().ok())
}

async fn snapshot(State(svc): State<SessionService>, Query(q): Query<SessionQuery>) -> Response {
    let Some(id) = parse_session(&q) else {
        return (StatusCode::UNAUTHORIZED, "AUTH_FAILED").into_response();
    };
    match svc.snapshot_png(id).await {
        Ok(png) => ([(header::CONTENT_TYPE, "image/png"), (header::CACHE_CONTROL, "no-store")], png).into_response(),
        Err(SnapshotError::Unauthorized) => (StatusCode::UNAUTHORIZED, "AUTH_FAILED").into_response(),
        Err(SnapshotError::Unavailable) => (StatusCode::SERVICE_UNAVAILABLE, "INSTANCE_DOWN").into_response(),
    }
}

async fn login(State(svc): State<SessionService>, Json(hello): Json<Hello>) -> Response {
    match svc.login(&hello, Transport::Direct) {
        Ok(token) => Json(HelloReply {
            ok: true,
            error: None,
            session_id: Some(token.session_id),
            instance: Some(token.instance_id),
            transport: Some(token.transport),
            fps: Some(svc.config().fps),
        })
        .into_response(),
        Err(code) => {
            let status = match code {
                "INSTANCE_DOWN" => StatusCode::SERVICE_UNAVAILABLE,
                "UNKNOWN_INSTANCE" => StatusCode::NOT_FOUND,
                "BAD_HANDSHAKE" => StatusCode::BAD_REQUEST,
                _ => StatusCode::UNAUTHORIZED,
            };
            (status, Json(HelloReply::error(code))).into_response()
        }
    }
}

async fn ws(
    State(svc): State<SessionService>,
    Query(q): Query<SessionQuery>,
    upgrade: WebSocketUpgrade,
) -> Response {
    let Some(id) = parse_session(&q) else {
        return (StatusCode::UNAUTHORIZED, "AUTH_FAILED").into_response();
    };
    if svc.registry().lookup(id).is_err() {
        return (StatusCode::UNAUTHORIZED, "TOKEN_REVOKED").into_response();
    }
    upgrade.on_upgrade(move |socket| bridge(svc, id, socket))
}

/// Each WebSocket binary message is one unit without the length field:
/// `[tag u8][payload]`. The bridge converts to and from the native framing
/// over an in-memory pipe into the regular stream handler.
async fn bridge(svc: SessionService, session: Uuid, mut socket: WebSocket) {
    let (near, far) = tokio::io::duplex(1 << 20);
    let handler = {
        let svc = svc.clone();
        tokio::spawn(async move { svc.handle(far, Transport::Direct).await })
    };
    let (rd, mut wr) = tokio::io::split(near);
    let mut rd = BufReader::new(rd);
    let mut hello = serde_json::to_vec(&Hello::resume(session)).expect("serialises");
    hello.push(b'\n');
    let mut line = String::new();
    let admitted = async {
        wr.write_all(&hello).await.ok()?;
        rd.read_line(&mut line).await.ok()?;
        serde_json::from_str::<HelloReply>(&line).ok()
    }
    .await;
    match admitted {
        Some(reply) if reply.ok => {
            let text = serde_json::to_string(&reply).expect("serialises");
            if socket.send(WsMessage::Text(text.into())).await.is_err() {
                handler.abort();
                return;
            }
        }
        other => {
            let text = serde_json::to_string(&other.unwrap_or_else(|| HelloReply::error("BAD_HANDSHAKE")))
                .expect("serialises");
            let _ = socket.send(WsMessage::Text(text.into())).await;
            handler.abort();
            return;
        }
    }
    loop {
        tokio::select! {
            unit = read_unit(&mut rd) => match unit {
                Ok(Some((tag, payload))) => {
                    let mut msg = Vec::with_capacity(1 + payload.len());
                    msg.push(tag.to_byte());
                    msg.extend_from_slice(&payload);
                    if socket.send(WsMessage::Binary(msg.into())).await.is_err() {
                        break;
                    }
                }
                _ => break,
            },
            msg = socket.recv() => match msg {
                Some(Ok(WsMessage::Binary(b))) if !b.is_empty() => {
                    let Ok(tag) = ChannelTag::from_byte(b[0]) else { continue };
                    let Ok(unit) = encode_unit(tag, &b[1..]) else { continue };
                    if wr.write_all(&unit).await.is_err() {
                        break;
                    }
                }
                Some(Ok(WsMessage::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
    let _ = wr.shutdown().await;
    let _ = socket.send(WsMessage::Close(None)).await;
    let _ = tokio::time::timeout(std::time::Duration::from_secs(2), handler).await;
}

/// `GET /snapshot?session=`, `POST /session`, `GET /ws?session=`.
pub fn router(svc: SessionService) -> Router {
    Router::new()
        .route("/snapshot", get(snapshot))
        .route("/session", post(login))
        .route("/ws", get(ws))
        .with_state(svc)
}
