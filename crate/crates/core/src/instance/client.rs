use std::net::SocketAddr;
use std::time::Duration;

use tokio::net::TcpStream;

use super::proto::{self, InstanceStatus, Message, Request, Response};
use crate::app::{ChatMessage, IsolationAuditReport, ProbeTargets};
use crate::wire::{Framebuffer, InputEvent};

const REQUEST_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, thiserror::Error)]
pub enum InstanceError {
    #[error("instance i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("instance rejected authentication")]
    AuthFailed,
    #[error("instance error {code}: {message}")]
    Remote { code: String, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("instance did not answer in time")]
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ack {
    pub revision: u64,
    pub applied: bool,
    pub outbound: Option<ChatMessage>,
}

/// Authenticated control connection to one instance process.
#[derive(Debug)]
pub struct InstanceClient {
    stream: TcpStream,
    app: String,
    enforcement: String,
}

impl InstanceClient {
    pub async fn connect(addr: SocketAddr, secret: &str) -> Result<Self, InstanceError> {
        let fut = async {
            let mut stream = TcpStream::connect(addr).await?;
            stream.set_nodelay(true)?;
            proto::write_async(
                &mut stream,
                &proto::encode_json(&Request::Hello {
                    secret: secret.to_owned(),
                }),
            )
            .await?;
            match read_response(&mut stream).await? {
                Response::Welcome { app, enforcement, .. } => Ok(InstanceClient {
                    stream,
                    app,
                    enforcement,
                }),
                Response::Error { code, .. } if code == "AUTH_FAILED" => {
                    Err(InstanceError::AuthFailed)
                }
                other => Err(InstanceError::Protocol(format!("unexpected {other:?}"))),
            }
        };
        tokio::time::timeout(REQUEST_TIMEOUT, fut)
            .await
            .map_err(|_| InstanceError::Timeout)?
    }

    pub fn app(&self) -> &str {
        &self.app
    }

    pub fn enforcement(&self) -> &str {
        &self.enforcement
    }

    async fn call(&mut self, req: &Request, timeout: Duration) -> Result<Message, InstanceError> {
        let fut = async {
            proto::write_async(&mut self.stream, &proto::encode_json(req)).await?;
            proto::read_message(&mut self.stream)
                .await?
                .ok_or_else(|| InstanceError::Protocol("connection closed".into()))
        };
        tokio::time::timeout(timeout, fut)
            .await
            .map_err(|_| InstanceError::Timeout)?
    }

    async fn call_json(&mut self, req: &Request, timeout: Duration) -> Result<Response, InstanceError> {
        match self.call(req, timeout).await? {
            Message::Json(body) => match proto::decode_response(&body)? {
                Response::Error { code, message } => Err(InstanceError::Remote { code, message }),
                r => Ok(r),
            },
            Message::Frame { .. } => Err(InstanceError::Protocol("unexpected frame".into())),
        }
    }

    fn ack(resp: Response) -> Result<Ack, InstanceError> {
        match resp {
            Response::Ack {
                revision,
                applied,
                outbound,
            } => Ok(Ack {
                revision,
                applied,
                outbound,
            }),
            other => Err(InstanceError::Protocol(format!("expected ack, got {other:?}"))),
        }
    }

    pub async fn deliver(&mut self, msg: ChatMessage) -> Result<Ack, InstanceError> {
        let r = self.call_json(&Request::Deliver { msg }, REQUEST_TIMEOUT).await?;
        Self::ack(r)
    }

    pub async fn input(&mut self, source: &str, event: InputEvent) -> Result<Ack, InstanceError> {
        let r = self
            .call_json(
                &Request::Input {
                    source: source.to_owned(),
                    event,
                },
                REQUEST_TIMEOUT,
            )
            .await?;
        Self::ack(r)
    }

    pub async fn render(&mut self) -> Result<(u64, Framebuffer), InstanceError> {
        match self.call(&Request::Render, REQUEST_TIMEOUT).await? {
            Message::Frame { revision, frame } => Ok((revision, frame)),
            Message::Json(body) => match proto::decode_response(&body)? {
                Response::Error { code, message } => Err(InstanceError::Remote { code, message }),
                other => Err(InstanceError::Protocol(format!("expected frame, got {other:?}"))),
            },
        }
    }

    pub async fn status(&mut self) -> Result<InstanceStatus, InstanceError> {
        match self.call_json(&Request::State, REQUEST_TIMEOUT).await? {
            Response::State(s) => Ok(s),
            other => Err(InstanceError::Protocol(format!("expected state, got {other:?}"))),
        }
    }

    pub async fn probe(
        &mut self,
        targets: ProbeTargets,
        timeout: Duration,
    ) -> Result<IsolationAuditReport, InstanceError> {
        match self.call_json(&Request::Probe { targets }, timeout).await? {
            Response::Probe { report } => Ok(report),
            other => Err(InstanceError::Protocol(format!("expected report, got {other:?}"))),
        }
    }
}

async fn read_response(stream: &mut TcpStream) -> Result<Response, InstanceError> {
    match proto::read_message(stream).await? {
        Some(Message::Json(body)) => Ok(proto::decode_response(&body)?),
        Some(Message::Frame { .. }) => Err(InstanceError::Protocol("unexpected frame".into())),
        None => Err(InstanceError::Protocol("connection closed".into())),
    }
}
