//! TURN-style relay for clients that cannot reach the server directly.
//!
//! The server keeps a `listen` registration open on the relay under a
//! service name. A client dials the relay with a fresh pairing id; the relay
//! tells the listener, which dials back as the server side of that pairing.
//! From then on the relay copies bytes both ways without looking at them.
//!
//! Each direction buffers at most [`RELAY_BUFFER`] bytes; beyond that the
//! sender waits for the receiver to drain.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, Semaphore};
use tokio::task::JoinHandle;
use uuid::Uuid;

use super::{SessionService, Transport};

pub const RELAY_BUFFER: usize = 1 << 20;
const CHUNK: usize = 64 * 1024;
const ABANDONED_AFTER: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Client,
    Server,
}

impl Side {
    fn idx(self) -> usize {
        match self {
            Side::Client => 0,
            Side::Server => 1,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Client => Side::Server,
            Side::Server => Side::Client,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RelayError {
    #[error("UNKNOWN_SESSION")]
    UnknownSession,
    #[error("PEER_ABSENT")]
    PeerAbsent,
    #[error("UNKNOWN_SERVICE")]
    UnknownService,
    #[error("SIDE_TAKEN")]
    SideTaken,
    #[error("relay refused: {0}")]
    Refused(String),
    #[error("relay i/o: {0}")]
    Io(#[from] std::io::Error),
}

struct Pipe {
    tx: Option<mpsc::UnboundedSender<Vec<u8>>>,
    rx: Option<mpsc::UnboundedReceiver<Vec<u8>>>,
    room: Arc<Semaphore>,
}

impl Pipe {
    fn new() -> Self {
        let (tx, rx) = mpsc::unbounded_channel();
        Pipe {
            tx: Some(tx),
            rx: Some(rx),
            room: Arc::new(Semaphore::new(RELAY_BUFFER)),
        }
    }
}

struct Pairing {
    /// pipes[i] carries bytes written by side i.
    pipes: [Pipe; 2],
    joined: [bool; 2],
    /// halves still held per side (sender + receiver)
    held: [u8; 2],
    created: Instant,
}

#[derive(Default)]
pub struct RelayHub {
    pairings: Mutex<HashMap<Uuid, Pairing>>,
    services: Mutex<HashMap<String, mpsc::UnboundedSender<Uuid>>>,
}

pub struct RelaySender {
    hub: Arc<RelayHub>,
    pairing: Uuid,
    side: Side,
}

pub struct RelayReceiver {
    hub: Arc<RelayHub>,
    pairing: Uuid,
    side: Side,
    rx: mpsc::UnboundedReceiver<Vec<u8>>,
    room: Arc<Semaphore>,
}

impl RelayHub {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Number of pairings the hub still tracks.
    pub fn pairing_count(&self) -> usize {
        self.pairings.lock().expect("relay lock").len()
    }

    /// Bytes buffered toward `side` that it has not read yet.
    pub fn buffered_toward(&self, pairing: Uuid, side: Side) -> Option<usize> {
        let p = self.pairings.lock().expect("relay lock");
        let pipe = &p.get(&pairing)?.pipes[side.other().idx()];
        Some(RELAY_BUFFER - pipe.room.available_permits())
    }

    /// Joins one side of a pairing, creating it on first use.
    pub fn join(self: &Arc<Self>, pairing: Uuid, side: Side) -> Result<(RelaySender, RelayReceiver), RelayError> {
        let mut map = self.pairings.lock().expect("relay lock");
        map.retain(|_, p| {
            let abandoned = p.held == [0, 0] && p.created.elapsed() > ABANDONED_AFTER;
            !abandoned
        });
        let p = map.entry(pairing).or_insert_with(|| Pairing {
            pipes: [Pipe::new(), Pipe::new()],
            joined: [false, false],
            held: [0, 0],
            created: Instant::now(),
        });
        if p.joined[side.idx()] {
            return Err(RelayError::SideTaken);
        }
        p.joined[side.idx()] = true;
        p.held[side.idx()] = 2;
        let incoming = &mut p.pipes[side.other().idx()];
        let rx = incoming.rx.take().expect("receiver taken once per side");
        let room = incoming.room.clone();
        Ok((
            RelaySender {
                hub: self.clone(),
                pairing,
                side,
            },
            RelayReceiver {
                hub: self.clone(),
                pairing,
                side,
                rx,
                room,
            },
        ))
    }

    /// Queues bytes from `side` for the other side. Waits for room while
    /// the peer is connected; with no peer and a full buffer it fails with
    /// `PeerAbsent` instead.
    pub async fn forward(&self, pairing: Uuid, side: Side, bytes: Vec<u8>) -> Result<(), RelayError> {
        for chunk in bytes.chunks(RELAY_BUFFER) {
            let (tx, room, peer) = {
                let map = self.pairings.lock().expect("relay lock");
                let p = map.get(&pairing).ok_or(RelayError::UnknownSession)?;
                let pipe = &p.pipes[side.idx()];
                let tx = pipe.tx.clone().ok_or(RelayError::UnknownSession)?;
                (tx, pipe.room.clone(), p.joined[side.other().idx()])
            };
            let n = chunk.len() as u32;
            if peer {
                room.acquire_many(n).await.map_err(|_| RelayError::UnknownSession)?.forget();
            } else {
                room.try_acquire_many(n).map_err(|_| RelayError::PeerAbsent)?.forget();
            }
            tx.send(chunk.to_vec()).map_err(|_| RelayError::UnknownSession)?;
        }
        Ok(())
    }

    fn release(&self, pairing: Uuid, side: Side, sender: bool) {
        let mut map = self.pairings.lock().expect("relay lock");
        let Some(p) = map.get_mut(&pairing) else { return };
        if sender {
            p.pipes[side.idx()].tx = None;
        }
        p.held[side.idx()] = p.held[side.idx()].saturating_sub(1);
        if p.held == [0, 0] && p.joined == [true, true] {
            map.remove(&pairing);
        }
    }

    fn register_service(&self, name: &str) -> mpsc::UnboundedReceiver<Uuid> {
        let (tx, rx) = mpsc::unbounded_channel();
        self.services.lock().expect("relay lock").insert(name.to_owned(), tx);
        rx
    }

    fn notify_service(&self, name: &str, pairing: Uuid) -> Result<(), RelayError> {
        let mut services = self.services.lock().expect("relay lock");
        let alive = services.get(name).map(|tx| tx.send(pairing).is_ok());
        match alive {
            Some(true) => Ok(()),
            Some(false) => {
                services.remove(name);
                Err(RelayError::UnknownService)
            }
            None => Err(RelayError::UnknownService),
        }
    }
}

impl RelaySender {
    pub async fn send(&self, bytes: Vec<u8>) -> Result<(), RelayError> {
        self.hub.forward(self.pairing, self.side, bytes).await
    }
}

impl Drop for RelaySender {
    fn drop(&mut self) {
        self.hub.release(self.pairing, self.side, true);
    }
}

impl RelayReceiver {
    /// Next chunk from the peer; `None` once the peer finished sending.
    pub async fn recv(&mut self) -> Option<Vec<u8>> {
        let chunk = self.rx.recv().await?;
        self.room.add_permits(chunk.len());
        Some(chunk)
    }
}

impl Drop for RelayReceiver {
    fn drop(&mut self) {
        self.hub.release(self.pairing, self.side, false);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "lowercase")]
pub enum RelayHello {
    Listen {
        service: String,
        #[serde(default)]
        secret: Option<String>,
    },
    Client {
        pairing: Uuid,
        #[serde(default)]
        service: Option<String>,
    },
    Server {
        pairing: Uuid,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RelayReply {
    ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Incoming {
    incoming: Uuid,
}

async fn write_line<T: Serialize, W: tokio::io::AsyncWrite + Unpin>(w: &mut W, v: &T) -> std::io::Result<()> {
    let mut b = serde_json::to_vec(v).expect("serialises");
    b.push(b'\n');
    w.write_all(&b).await?;
    w.flush().await
}

async fn read_line<R: tokio::io::AsyncBufRead + Unpin>(r: &mut R) -> std::io::Result<String> {
    let mut s = String::new();
    let n = tokio::time::timeout(Duration::from_secs(10), (&mut *r).take(8192).read_line(&mut s))
        .await
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::TimedOut, "relay handshake"))??;
    if n == 0 || !s.ends_with('\n') {
        return Err(std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "relay handshake"));
    }
    Ok(s)
}

/// The relay's TCP front end.
pub struct RelayServer {
    hub: Arc<RelayHub>,
    secret: Option<String>,
}

impl RelayServer {
    pub fn new(secret: Option<String>) -> Self {
        RelayServer {
            hub: RelayHub::new(),
            secret,
        }
    }

    pub fn hub(&self) -> &Arc<RelayHub> {
        &self.hub
    }

    pub fn serve(self, listener: TcpListener) -> JoinHandle<()> {
        let this = Arc::new(self);
        tokio::spawn(async move {
            loop {
                let Ok((stream, _)) = listener.accept().await else { continue };
                stream.set_nodelay(true).ok();
                let this = this.clone();
                tokio::spawn(async move {
                    if let Err(e) = this.handle(stream).await {
                        tracing::debug!("relay connection: {e}");
                    }
                });
            }
        })
    }

    async fn handle(&self, stream: TcpStream) -> Result<(), RelayError> {
        let mut stream = BufReader::new(stream);
        let hello: RelayHello = serde_json::from_str(&read_line(&mut stream).await?)
            .map_err(|e| RelayError::Refused(e.to_string()))?;
        let refuse = |code: &str| RelayReply {
            ok: false,
            error: Some(code.to_owned()),
        };
        let ok = RelayReply { ok: true, error: None };
        match hello {
            RelayHello::Listen { service, secret } => {
                if self.secret.is_some() && secret != self.secret {
                    write_line(&mut stream, &refuse("AUTH_FAILED")).await?;
                    return Ok(());
                }
                let mut rx = self.hub.register_service(&service);
                write_line(&mut stream, &ok).await?;
                let (mut rd, mut wr) = tokio::io::split(stream);
                let mut probe = [0u8; 1];
                loop {
                    tokio::select! {
                        id = rx.recv() => match id {
                            Some(incoming) => write_line(&mut wr, &Incoming { incoming }).await?,
                            None => break,
                        },
                        // the listener never sends after hello; EOF means it left
                        r = rd.read(&mut probe) => if matches!(r, Ok(0) | Err(_)) { break },
                    }
                }
                Ok(())
            }
            RelayHello::Client { pairing, service } => {
                let halves = match self.hub.join(pairing, Side::Client) {
                    Ok(h) => h,
                    Err(e) => {
                        write_line(&mut stream, &refuse(&e.to_string())).await?;
                        return Ok(());
                    }
                };
                if let Some(service) = service {
                    if let Err(e) = self.hub.notify_service(&service, pairing) {
                        write_line(&mut stream, &refuse(&e.to_string())).await?;
                        return Ok(());
                    }
                }
                write_line(&mut stream, &ok).await?;
                splice(stream, halves).await
            }
            RelayHello::Server { pairing } => {
                let halves = match self.hub.join(pairing, Side::Server) {
                    Ok(h) => h,
                    Err(e) => {
                        write_line(&mut stream, &refuse(&e.to_string())).await?;
                        return Ok(());
                    }
                };
                write_line(&mut stream, &ok).await?;
                splice(stream, halves).await
            }
        }
    }
}

/// Copies socket bytes into the hub and hub bytes onto the socket until
/// both directions finish.
async fn splice(stream: BufReader<TcpStream>, (tx, mut rx): (RelaySender, RelayReceiver)) -> Result<(), RelayError> {
    let (mut rd, mut wr) = tokio::io::split(stream);
    let up = async move {
        let mut buf = vec![0u8; CHUNK];
        loop {
            let n = match rd.read(&mut buf).await {
                Ok(0) | Err(_) => break,
                Ok(n) => n,
            };
            if tx.send(buf[..n].to_vec()).await.is_err() {
                break;
            }
        }
        drop(tx);
    };
    let down = async move {
        while let Some(chunk) = rx.recv().await {
            if wr.write_all(&chunk).await.is_err() {
                break;
            }
        }
        let _ = wr.shutdown().await;
    };
    tokio::join!(up, down);
    Ok(())
}

async fn dial(addr: SocketAddr, hello: &RelayHello) -> Result<BufReader<TcpStream>, RelayError> {
    let s = TcpStream::connect(addr).await?;
    s.set_nodelay(true).ok();
    let mut s = BufReader::new(s);
    write_line(&mut s, hello).await?;
    let reply: RelayReply = serde_json::from_str(&read_line(&mut s).await?)
        .map_err(|e| RelayError::Refused(e.to_string()))?;
    if !reply.ok {
        let code = reply.error.unwrap_or_default();
        return Err(match code.as_str() {
            "UNKNOWN_SERVICE" => RelayError::UnknownService,
            "SIDE_TAKEN" => RelayError::SideTaken,
            _ => RelayError::Refused(code),
        });
    }
    Ok(s)
}

/// Client side: a byte stream to whichever server listens as `service`.
pub async fn dial_service(addr: SocketAddr, service: &str) -> Result<BufReader<TcpStream>, RelayError> {
    dial(
        addr,
        &RelayHello::Client {
            pairing: Uuid::new_v4(),
            service: Some(service.to_owned()),
        },
    )
    .await
}

/// Joins an agreed pairing directly, without a service listener.
pub async fn dial_pairing(addr: SocketAddr, pairing: Uuid, side: Side) -> Result<BufReader<TcpStream>, RelayError> {
    let hello = match side {
        Side::Client => RelayHello::Client {
            pairing,
            service: None,
        },
        Side::Server => RelayHello::Server { pairing },
    };
    dial(addr, &hello).await
}

/// Server side: keeps a listen registration open and hands each relayed
/// client to the session service.
pub fn run_agent(relay: SocketAddr, service: String, secret: Option<String>, svc: SessionService) -> JoinHandle<()> {
    tokio::spawn(async move {
        let mut backoff = Duration::from_millis(200);
        loop {
            match listen_once(relay, &service, secret.clone(), &svc).await {
                Ok(()) => backoff = Duration::from_millis(200),
                Err(e) => tracing::warn!("relay listener: {e}"),
            }
            tokio::time::sleep(backoff).await;
            backoff = (backoff * 2).min(Duration::from_secs(5));
        }
    })
}

async fn listen_once(relay: SocketAddr, service: &str, secret: Option<String>, svc: &SessionService) -> Result<(), RelayError> {
    let mut s = dial(
        relay,
        &RelayHello::Listen {
            service: service.to_owned(),
            secret,
        },
    )
    .await?;
    tracing::info!(%relay, service, "registered with relay");
    let mut line = String::new();
    loop {
        line.clear();
        if s.read_line(&mut line).await? == 0 {
            return Ok(());
        }
        let Ok(Incoming { incoming }) = serde_json::from_str(&line) else { continue };
        let svc = svc.clone();
        tokio::spawn(async move {
            match dial_pairing(relay, incoming, Side::Server).await {
                Ok(stream) => svc.handle(stream, Transport::Relayed).await,
                Err(e) => tracing::warn!("relay dial-back failed: {e}"),
            }
        });
    }
}
