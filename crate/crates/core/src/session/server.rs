use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use tokio::io::{AsyncBufReadExt, AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt, BufReader};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc};
use tokio::task::JoinHandle;
use uuid::Uuid;

use super::{
    AuthError, ControlRequest, CredentialStore, Hello, HelloReply, Notice, SessionLookupError,
    SessionRegistry, Transport, Want, ALL_CHANNELS,
};
use crate::app::ChatMessage;
use crate::instance::InstanceClient;
use crate::orchestrator::{InstanceState, LifecycleEvent, Orchestrator, OrchestratorError};
use crate::wire::{
    decode_input, encode_unit, read_unit, ChannelTag, FrameEncoder, KeyframeMode, ProbeDirection,
    ProbePacket,
};

const MAX_HELLO: u64 = 8 * 1024;

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub fps: u32,
    pub keyframe_mode: KeyframeMode,
    pub handshake_timeout: Duration,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            fps: 10,
            keyframe_mode: KeyframeMode::Raw,
            handshake_timeout: Duration::from_secs(10),
        }
    }
}

/// A message the user sent from inside an instance, bound for the SMS
/// gateway.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutboundChat {
    pub instance_id: Uuid,
    pub message: ChatMessage,
}

struct Inner {
    orch: Orchestrator,
    creds: Arc<CredentialStore>,
    registry: Arc<SessionRegistry>,
    config: SessionConfig,
    outbound: Option<mpsc::UnboundedSender<OutboundChat>>,
    open_connections: AtomicU64,
}

#[derive(Clone)]
pub struct SessionService {
    inner: Arc<Inner>,
}

impl SessionService {
    /// Must be called inside a tokio runtime: it starts a task that revokes
    /// the sessions of destroyed instances.
    pub fn new(
        orch: Orchestrator,
        creds: Arc<CredentialStore>,
        config: SessionConfig,
        outbound: Option<mpsc::UnboundedSender<OutboundChat>>,
    ) -> Self {
        let registry = Arc::new(SessionRegistry::new());
        let mut events = orch.subscribe();
        let reg = registry.clone();
        tokio::spawn(async move {
            loop {
                match events.recv().await {
                    Ok((id, LifecycleEvent::Terminated)) => {
                        reg.revoke_instance(id);
                    }
                    Ok(_) | Err(broadcast::error::RecvError::Lagged(_)) => {}
                    Err(broadcast::error::RecvError::Closed) => break,
                }
            }
        });
        SessionService {
            inner: Arc::new(Inner {
                orch,
                creds,
                registry,
                config,
                outbound,
                open_connections: AtomicU64::new(0),
            }),
        }
    }

    pub fn orchestrator(&self) -> &Orchestrator {
        &self.inner.orch
    }

    pub fn credentials(&self) -> &Arc<CredentialStore> {
        &self.inner.creds
    }

    pub fn registry(&self) -> &Arc<SessionRegistry> {
        &self.inner.registry
    }

    pub fn config(&self) -> &SessionConfig {
        &self.inner.config
    }

    pub fn open_connections(&self) -> u64 {
        self.inner.open_connections.load(Ordering::Relaxed)
    }

    /// Accepts direct client connections until the task is aborted.
    pub fn serve(&self, listener: TcpListener) -> JoinHandle<()> {
        let svc = self.clone();
        tokio::spawn(async move {
            loop {
                let Ok((stream, _)) = listener.accept().await else { continue };
                stream.set_nodelay(true).ok();
                let svc = svc.clone();
                tokio::spawn(async move { svc.handle(stream, Transport::Direct).await });
            }
        })
    }

    fn check_instance(&self, id: Uuid) -> Result<(), &'static str> {
        match self.inner.orch.handle(id) {
            Ok(h) if h.state == InstanceState::Running => Ok(()),
            Ok(_) => Err("INSTANCE_DOWN"),
            Err(_) => Err("UNKNOWN_INSTANCE"),
        }
    }

    /// Authenticates a login and creates a session without attaching a
    /// stream (used by the HTTP login for browser clients).
    pub fn login(&self, hello: &Hello, transport: Transport) -> Result<super::SessionToken, &'static str> {
        let Hello::Login {
            credential,
            instance,
            ..
        } = hello
        else {
            return Err("BAD_HANDSHAKE");
        };
        self.inner
            .creds
            .authenticate(credential, *instance)
            .map_err(|e| match e {
                AuthError::AuthFailed => "AUTH_FAILED",
                AuthError::Expired => "EXPIRED",
            })?;
        self.check_instance(*instance)?;
        let expires = self
            .inner
            .creds
            .expires_at_ms(&credential.username)
            .unwrap_or(0);
        Ok(self.inner.registry.issue(*instance, transport, expires))
    }

    fn admit(&self, hello: &Hello, transport: Transport) -> Result<super::Attachment, &'static str> {
        let session = match hello {
            Hello::Login { .. } => self.login(hello, transport)?.session_id,
            Hello::Resume { session, .. } => {
                let token = self.inner.registry.lookup(*session).map_err(lookup_code)?;
                self.check_instance(token.instance_id)?;
                *session
            }
        };
        self.inner
            .registry
            .attach(session, transport)
            .map_err(lookup_code)
    }

    /// Serves one client connection from handshake to close.
    pub async fn handle<S>(&self, stream: S, transport: Transport)
    where
        S: AsyncRead + AsyncWrite + Send + Unpin + 'static,
    {
        self.inner.open_connections.fetch_add(1, Ordering::Relaxed);
        let (rd, mut wr) = tokio::io::split(stream);
        let mut rd = BufReader::new(rd);
        let mut line = String::new();
        let read = tokio::time::timeout(
            self.inner.config.handshake_timeout,
            (&mut rd).take(MAX_HELLO).read_line(&mut line),
        )
        .await;
        let admitted = match read {
            Ok(Ok(n)) if n > 0 && line.ends_with('\n') => match serde_json::from_str::<Hello>(&line) {
                Ok(hello) => self.admit(&hello, transport).map(|a| (a, hello)),
                Err(_) => Err("BAD_HANDSHAKE"),
            },
            _ => Err("BAD_HANDSHAKE"),
        };
        let reply = match &admitted {
            Ok((att, _)) => HelloReply {
                ok: true,
                error: None,
                session_id: Some(att.token.session_id),
                instance: Some(att.token.instance_id),
                transport: Some(att.token.transport),
                fps: Some(self.inner.config.fps),
            },
            Err(code) => HelloReply::error(code),
        };
        let mut bytes = serde_json::to_vec(&reply).expect("reply serialises");
        bytes.push(b'\n');
        let wrote = wr.write_all(&bytes).await.and(wr.flush().await);
        if let (Ok((att, hello)), Ok(())) = (admitted, wrote) {
            let want = if hello.want().is_empty() {
                ALL_CHANNELS.to_vec()
            } else {
                hello.want().to_vec()
            };
            Stream {
                svc: self.clone(),
                att,
                want,
            }
            .run(rd, wr)
            .await;
        } else {
            let _ = wr.shutdown().await;
        }
        self.inner.open_connections.fetch_sub(1, Ordering::Relaxed);
    }

    /// Current screen of the session's instance as PNG.
    pub async fn snapshot_png(&self, session: Uuid) -> Result<Vec<u8>, super::SnapshotError> {
        use super::SnapshotError;
        let token = self
            .inner
            .registry
            .lookup(session)
            .map_err(|_| SnapshotError::Unauthorized)?;
        let mut client = match self.inner.orch.connect(token.instance_id).await {
            Ok(c) => c,
            Err(OrchestratorError::UnknownInstance) => return Err(SnapshotError::Unauthorized),
            Err(_) => return Err(SnapshotError::Unavailable),
        };
        let (_, frame) = client.render().await.map_err(|_| SnapshotError::Unavailable)?;
        frame.to_png().map_err(|_| SnapshotError::Unavailable)
    }
}

fn lookup_code(e: SessionLookupError) -> &'static str {
    match e {
        SessionLookupError::Revoked => "TOKEN_REVOKED",
        SessionLookupError::Expired => "EXPIRED",
    }
}

fn notice_unit(n: &Notice) -> Vec<u8> {
    encode_unit(ChannelTag::Control, &serde_json::to_vec(n).expect("notice serialises"))
        .expect("notice fits a unit")
}

struct Stream {
    svc: SessionService,
    att: super::Attachment,
    want: Vec<Want>,
}

enum Flow {
    Continue,
    Close,
}

impl Stream {
    async fn run<R, W>(mut self, mut rd: R, mut wr: W)
    where
        R: AsyncRead + Send + Unpin + 'static,
        W: AsyncWrite + Send + Unpin + 'static,
    {
        let session = self.att.token.session_id;
        let instance = self.att.token.instance_id;
        let source = session.to_string();
        let orch = self.svc.inner.orch.clone();
        let mut events = orch.subscribe();

        let (in_tx, mut in_rx) = mpsc::channel::<(ChannelTag, Vec<u8>)>(64);
        let reader = tokio::spawn(async move {
            while let Ok(Some(unit)) = read_unit(&mut rd).await {
                if in_tx.send(unit).await.is_err() {
                    break;
                }
            }
        });

        // Control units jump ahead of frames; the frame queue holds one
        // encoded frame so the encoder only advances when it can send.
        let (ctrl_tx, mut ctrl_rx) = mpsc::channel::<Vec<u8>>(256);
        let (frame_tx, mut frame_rx) = mpsc::channel::<Vec<u8>>(1);
        let writer = tokio::spawn(async move {
            loop {
                let unit = tokio::select! {
                    biased;
                    u = ctrl_rx.recv() => u,
                    u = frame_rx.recv() => u,
                };
                let Some(unit) = unit else { break };
                if wr.write_all(&unit).await.is_err() || wr.flush().await.is_err() {
                    break;
                }
            }
            let _ = wr.shutdown().await;
        });

        let fps = self.svc.inner.config.fps.max(1);
        let mut tick = tokio::time::interval(Duration::from_secs_f64(1.0 / fps as f64));
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        let frames_on = self.want.contains(&Want::Frames);
        let mut encoder = FrameEncoder::new(self.svc.inner.config.keyframe_mode);
        let mut inst: Option<InstanceClient> = None;
        tracing::debug!(%session, %instance, "stream open");

        loop {
            let flow = tokio::select! {
                biased;
                ev = events.recv() => match ev {
                    Ok((id, ev)) if id == instance => {
                        let (notice, flow) = match ev {
                            LifecycleEvent::Resetting => {
                                inst = None;
                                (Some(Notice::Resetting), Flow::Continue)
                            }
                            LifecycleEvent::Reset { count } => {
                                inst = None;
                                encoder.force_keyframe();
                                (Some(Notice::Reset { count }), Flow::Continue)
                            }
                            LifecycleEvent::Stopped => {
                                inst = None;
                                (Some(Notice::InstanceDown), Flow::Continue)
                            }
                            LifecycleEvent::Terminated => (Some(Notice::Terminated), Flow::Close),
                            LifecycleEvent::Started => (None, Flow::Continue),
                        };
                        if let Some(n) = notice {
                            let _ = ctrl_tx.send(notice_unit(&n)).await;
                        }
                        flow
                    }
                    Ok(_) | Err(broadcast::error::RecvError::Lagged(_)) => Flow::Continue,
                    Err(broadcast::error::RecvError::Closed) => Flow::Close,
                },
                _ = self.att.superseded() => {
                    let n = match self.svc.inner.registry.lookup(session) {
                        Ok(_) => Notice::Superseded,
                        Err(_) if orch.handle(instance).is_err() => Notice::Terminated,
                        Err(_) => Notice::Revoked,
                    };
                    let _ = ctrl_tx.send(notice_unit(&n)).await;
                    Flow::Close
                }
                unit = in_rx.recv() => match unit {
                    None => Flow::Close,
                    Some((ChannelTag::Input, payload)) => {
                        if self.want.contains(&Want::Input) {
                            self.on_input(&mut inst, &source, &payload, &ctrl_tx).await;
                        }
                        Flow::Continue
                    }
                    Some((ChannelTag::Control, payload)) => {
                        if ProbePacket::looks_like_probe(&payload) {
                            if let Ok(p) = ProbePacket::from_bytes(&payload) {
                                if p.direction == ProbeDirection::Probe {
                                    let unit = encode_unit(ChannelTag::Control, &p.ack().to_bytes())
                                        .expect("probe fits a unit");
                                    let _ = ctrl_tx.send(unit).await;
                                }
                            }
                        } else if let Ok(ControlRequest::Keyframe) = serde_json::from_slice(&payload) {
                            encoder.force_keyframe();
                        }
                        Flow::Continue
                    }
                    Some((ChannelTag::Frames, _)) => Flow::Continue,
                },
                _ = tick.tick(), if frames_on => {
                    self.pump(&mut inst, &mut encoder, &frame_tx).await
                }
            };
            if let Flow::Close = flow {
                break;
            }
        }
        reader.abort();
        drop(ctrl_tx);
        drop(frame_tx);
        let _ = tokio::time::timeout(Duration::from_secs(2), writer).await;
        tracing::debug!(%session, "stream closed");
    }

    async fn ensure_instance<'a>(&self, inst: &'a mut Option<InstanceClient>) -> Option<&'a mut InstanceClient> {
        if inst.is_none() {
            if let Ok(c) = self.svc.inner.orch.connect(self.att.token.instance_id).await {
                *inst = Some(c);
            }
        }
        inst.as_mut()
    }

    async fn on_input(
        &self,
        inst: &mut Option<InstanceClient>,
        source: &str,
        payload: &[u8],
        ctrl_tx: &mpsc::Sender<Vec<u8>>,
    ) {
        let event = match decode_input(payload) {
            Ok(ev) => ev,
            Err(_) => {
                let n = Notice::Error {
                    code: "BAD_INPUT".into(),
                };
                let _ = ctrl_tx.send(notice_unit(&n)).await;
                return;
            }
        };
        let Some(client) = self.ensure_instance(inst).await else {
            tracing::debug!("input dropped, instance unavailable");
            return;
        };
        match client.input(source, event).await {
            Ok(ack) => {
                if let (Some(message), Some(out)) = (ack.outbound, &self.svc.inner.outbound) {
                    let _ = out.send(OutboundChat {
                        instance_id: self.att.token.instance_id,
                        message,
                    });
                }
            }
            Err(e) => {
                tracing::debug!("instance input failed: {e}");
                *inst = None;
            }
        }
    }

    async fn pump(
        &self,
        inst: &mut Option<InstanceClient>,
        encoder: &mut FrameEncoder,
        frame_tx: &mpsc::Sender<Vec<u8>>,
    ) -> Flow {
        let permit = match frame_tx.try_reserve() {
            Ok(p) => p,
            Err(mpsc::error::TrySendError::Full(())) => return Flow::Continue,
            Err(mpsc::error::TrySendError::Closed(())) => return Flow::Close,
        };
        let Some(client) = self.ensure_instance(inst).await else {
            return Flow::Continue;
        };
        let frame = match client.render().await {
            Ok((_, f)) => f,
            Err(e) => {
                tracing::debug!("render failed: {e}");
                *inst = None;
                return Flow::Continue;
            }
        };
        match encoder.encode(&frame).and_then(|p| p.to_bytes()) {
            Ok(bytes) => {
                permit.send(encode_unit(ChannelTag::Frames, &bytes).expect("frame fits a unit"));
                Flow::Continue
            }
            Err(e) => {
                tracing::warn!("frame encode failed: {e}");
                Flow::Close
            }
        }
    }
}
