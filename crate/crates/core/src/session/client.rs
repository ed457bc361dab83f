//! Headless session client: used by the metrics harness, the CLI and tests.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use tokio::io::{AsyncBufReadExt, AsyncRead, AsyncWrite, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;
use tokio::sync::{mpsc, Mutex};
use uuid::Uuid;

use super::relay::{self, RelayError};
use super::{ControlRequest, Hello, HelloReply, Notice, Transport};
use crate::wire::{
    encode_input, encode_unit, read_unit, ChannelTag, Encoding, FrameDecoder, FramePacket,
    Framebuffer, InputEvent, ProbeDirection, ProbePacket, WireError,
};

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("server refused session: {0}")]
    Refused(String),
    #[error("bad handshake reply")]
    BadReply,
    #[error("relay: {0}")]
    Relay(#[from] RelayError),
    #[error("no route to server")]
    NoRoute,
    #[error("timed out")]
    Timeout,
    #[error("session closed")]
    Closed,
    #[error("wire: {0}")]
    Wire(#[from] WireError),
}

impl SessionError {
    /// Server error code, when the server refused the handshake.
    pub fn code(&self) -> Option<&str> {
        match self {
            SessionError::Refused(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum ClientEvent {
    Frame {
        frame_id: u32,
        encoding: Encoding,
        /// Size of the packet on the wire.
        packet_len: usize,
        frame: Arc<Framebuffer>,
    },
    ProbeAck {
        packet: ProbePacket,
        /// Client clock, ms since the session client started.
        received_ms: u64,
    },
    Notice(Notice),
    /// The stream failed to decode; a keyframe was requested.
    DecodeError(String),
    Closed,
}

type BoxWrite = Box<dyn AsyncWrite + Send + Unpin>;

/// How to reach the relay when no direct path exists.
#[derive(Debug, Clone)]
pub struct RelayRoute {
    pub addr: SocketAddr,
    pub service: String,
}

#[derive(Debug, Clone, Default)]
pub struct ConnectOptions {
    pub direct: Option<SocketAddr>,
    pub relay: Option<RelayRoute>,
    pub direct_timeout: Option<Duration>,
}

pub struct SessionClient {
    session_id: Uuid,
    instance_id: Uuid,
    transport: Transport,
    writer: Arc<Mutex<BoxWrite>>,
    events: mpsc::UnboundedReceiver<ClientEvent>,
    reader: tokio::task::JoinHandle<()>,
    epoch: Instant,
}

impl SessionClient {
    /// Direct TCP first, then the relay.
    pub async fn connect(opts: &ConnectOptions, hello: &Hello) -> Result<Self, SessionError> {
        let timeout = opts.direct_timeout.unwrap_or(Duration::from_secs(2));
        if let Some(addr) = opts.direct {
            match tokio::time::timeout(timeout, TcpStream::connect(addr)).await {
                Ok(Ok(s)) => {
                    s.set_nodelay(true).ok();
                    return Self::over(s, hello).await;
                }
                Ok(Err(e)) => tracing::debug!("direct connect failed: {e}"),
                Err(_) => tracing::debug!("direct connect timed out"),
            }
        }
        match &opts.relay {
            Some(route) => {
                let s = relay::dial_service(route.addr, &route.service).await?;
                Self::over(s, hello).await
            }
            None => Err(SessionError::NoRoute),
        }
    }

    pub async fn connect_direct(addr: SocketAddr, hello: &Hello) -> Result<Self, SessionError> {
        let s = TcpStream::connect(addr).await?;
        s.set_nodelay(true).ok();
        Self::over(s, hello).await
    }

    /// Runs the handshake over an already-connected byte stream.
    pub async fn over<S>(stream: S, hello: &Hello) -> Result<Self, SessionError>
    where
        S: AsyncRead + AsyncWrite + Send + Unpin + 'static,
    {
        let (rd, mut wr) = tokio::io::split(stream);
        let mut line = serde_json::to_vec(hello).expect("hello serialises");
        line.push(b'\n');
        wr.write_all(&line).await?;
        wr.flush().await?;
        let mut rd = BufReader::new(rd);
        let mut reply = String::new();
        tokio::time::timeout(Duration::from_secs(10), rd.read_line(&mut reply))
            .await
            .map_err(|_| SessionError::Timeout)??;
        let reply: HelloReply = serde_json::from_str(&reply).map_err(|_| SessionError::BadReply)?;
        if !reply.ok {
            return Err(SessionError::Refused(reply.error.unwrap_or_default()));
        }
        let (Some(session_id), Some(instance_id), Some(transport)) =
            (reply.session_id, reply.instance, reply.transport)
        else {
            return Err(SessionError::BadReply);
        };
        let writer: Arc<Mutex<BoxWrite>> = Arc::new(Mutex::new(Box::new(wr)));
        let (tx, events) = mpsc::unbounded_channel();
        let epoch = Instant::now();
        let reader = tokio::spawn(read_loop(rd, tx, writer.clone(), epoch));
        Ok(SessionClient {
            session_id,
            instance_id,
            transport,
            writer,
            events,
            reader,
            epoch,
        })
    }

    pub fn session_id(&self) -> Uuid {
        self.session_id
    }

    pub fn instance_id(&self) -> Uuid {
        self.instance_id
    }

    pub fn transport(&self) -> Transport {
        self.transport
    }

    /// Milliseconds on this client's monotonic clock.
    pub fn clock_ms(&self) -> u64 {
        self.epoch.elapsed().as_millis() as u64
    }

    async fn send(&self, tag: ChannelTag, payload: &[u8]) -> Result<(), SessionError> {
        let unit = encode_unit(tag, payload)?;
        let mut w = self.writer.lock().await;
        w.write_all(&unit).await?;
        w.flush().await?;
        Ok(())
    }

    pub async fn send_input(&self, ev: &InputEvent) -> Result<(), SessionError> {
        self.send(ChannelTag::Input, &encode_input(ev)?).await
    }

    /// Sends a probe stamped with the current client clock.
    pub async fn send_probe(&self, probe_id: u32) -> Result<ProbePacket, SessionError> {
        let p = ProbePacket::probe(probe_id, self.clock_ms());
        self.send(ChannelTag::Control, &p.to_bytes()).await?;
        Ok(p)
    }

    pub async fn request_keyframe(&self) -> Result<(), SessionError> {
        let body = serde_json::to_vec(&ControlRequest::Keyframe).expect("serialises");
        self.send(ChannelTag::Control, &body).await
    }

    pub async fn next_event(&mut self) -> Option<ClientEvent> {
        self.events.recv().await
    }

    pub async fn next_event_timeout(&mut self, t: Duration) -> Result<ClientEvent, SessionError> {
        match tokio::time::timeout(t, self.events.recv()).await {
            Ok(Some(ev)) => Ok(ev),
            Ok(None) => Err(SessionError::Closed),
            Err(_) => Err(SessionError::Timeout),
        }
    }

    /// Waits for the next frame, skipping other events.
    pub async fn next_frame(&mut self, t: Duration) -> Result<(u32, Encoding, Arc<Framebuffer>), SessionError> {
        let deadline = tokio::time::Instant::now() + t;
        loop {
            let left = deadline.saturating_duration_since(tokio::time::Instant::now());
            match self.next_event_timeout(left).await? {
                ClientEvent::Frame {
                    frame_id,
                    encoding,
                    frame,
                    ..
                } => return Ok((frame_id, encoding, frame)),
                ClientEvent::Closed => return Err(SessionError::Closed),
                _ => {}
            }
        }
    }

    /// Drops everything queued so far.
    pub fn drain(&mut self) -> Vec<ClientEvent> {
        let mut v = Vec::new();
        while let Ok(ev) = self.events.try_recv() {
            v.push(ev);
        }
        v
    }

    pub async fn close(self) {
        let mut w = self.writer.lock().await;
        let _ = w.shutdown().await;
        drop(w);
        self.reader.abort();
    }
}

impl Drop for SessionClient {
    fn drop(&mut self) {
        self.reader.abort();
    }
}

async fn read_loop<R: AsyncRead + Unpin>(
    mut rd: R,
    tx: mpsc::UnboundedSender<ClientEvent>,
    writer: Arc<Mutex<BoxWrite>>,
    epoch: Instant,
) {
    let mut decoder = FrameDecoder::new();
    loop {
        let unit = match read_unit(&mut rd).await {
            Ok(Some(u)) => u,
            _ => break,
        };
        let ev = match unit {
            (ChannelTag::Frames, bytes) => {
                let decoded = FramePacket::from_bytes(&bytes)
                    .and_then(|p| decoder.decode(&p).map(|f| (p.frame_id, p.encoding, f.clone())));
                match decoded {
                    Ok((frame_id, encoding, frame)) => ClientEvent::Frame {
                        frame_id,
                        encoding,
                        packet_len: bytes.len(),
                        frame: Arc::new(frame),
                    },
                    Err(e) => {
                        decoder.reset();
                        let body = serde_json::to_vec(&ControlRequest::Keyframe).expect("serialises");
                        if let Ok(unit) = encode_unit(ChannelTag::Control, &body) {
                            let mut w = writer.lock().await;
                            let _ = w.write_all(&unit).await;
                            let _ = w.flush().await;
                        }
                        ClientEvent::DecodeError(e.to_string())
                    }
                }
            }
            (ChannelTag::Control, bytes) if ProbePacket::looks_like_probe(&bytes) => {
                match ProbePacket::from_bytes(&bytes) {
                    Ok(packet) if packet.direction == ProbeDirection::Ack => ClientEvent::ProbeAck {
                        packet,
                        received_ms: epoch.elapsed().as_millis() as u64,
                    },
                    _ => continue,
                }
            }
            (ChannelTag::Control, bytes) => match serde_json::from_slice::<Notice>(&bytes) {
                Ok(n) => ClientEvent::Notice(n),
                Err(_) => continue,
            },
            (ChannelTag::Input, _) => continue,
        };
        if tx.send(ev).is_err() {
            return;
        }
    }
    let _ = tx.send(ClientEvent::Closed);
}
