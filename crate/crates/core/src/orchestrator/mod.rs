//! Sandbox orchestrator: one confined `zc-instance` process per app, a
//! pristine snapshot per sandbox, scheduled resets and isolation audits.

mod audit;
mod persist;
mod scheduler;
pub mod snapshot;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::Stdio;
use std::sync::atomic::AtomicBool;
use std::sync::{Arc, Mutex as StdMutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tokio::io::{AsyncBufReadExt, BufReader};
use tokio::process::{Child, Command};
use tokio::sync::{broadcast, Mutex};
use uuid::Uuid;

use crate::app::{ChatMessage, REGISTERED_APPS};
use crate::instance::{Ack, InstanceClient, InstanceError, InstanceStatus, APP_FILE, EVENT_LOG};

pub use scheduler::SchedulerHandle;
pub use snapshot::{digest_dir, SnapshotRef};

pub const DEFAULT_RESET_PERIOD: Duration = Duration::from_secs(72 * 3600);
pub const STATE_FILE: &str = "orchestrator.json";
const READY_TIMEOUT: Duration = Duration::from_secs(10);

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

mod duration_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

fn default_period() -> Duration {
    DEFAULT_RESET_PERIOD
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub app_name: String,
    pub instance_id: Uuid,
    pub sandbox_dir: PathBuf,
    /// Phone number the SMS gateway routes to this instance.
    #[serde(default)]
    pub gateway_binding: Option<String>,
    #[serde(with = "duration_ms", rename = "reset_period_ms", default = "default_period")]
    pub reset_period: Duration,
}

impl InstanceSpec {
    pub fn new(app_name: impl Into<String>, sandbox_dir: impl Into<PathBuf>) -> Self {
        InstanceSpec {
            app_name: app_name.into(),
            instance_id: Uuid::new_v4(),
            sandbox_dir: sandbox_dir.into(),
            gateway_binding: None,
            reset_period: DEFAULT_RESET_PERIOD,
        }
    }

    pub fn with_binding(mut self, number: impl Into<String>) -> Self {
        self.gateway_binding = Some(number.into());
        self
    }

    pub fn with_reset_period(mut self, period: Duration) -> Self {
        self.reset_period = period;
        self
    }

    pub fn with_id(mut self, id: Uuid) -> Self {
        self.instance_id = id;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceState {
    Starting,
    Running,
    Resetting,
    Stopped,
}

impl InstanceState {
    /// Allowed lifecycle edges. `Stopped` is terminal for a given process;
    /// a stopped instance only comes back through recovery or re-creation.
    pub fn can_become(self, next: InstanceState) -> bool {
        use InstanceState::*;
        matches!(
            (self, next),
            (Starting, Running)
                | (Starting, Stopped)
                | (Running, Resetting)
                | (Running, Stopped)
                | (Resetting, Running)
                | (Resetting, Stopped)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum LifecycleEvent {
    Started,
    Resetting,
    Reset { count: u64 },
    Stopped,
    Terminated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceHandle {
    pub spec: InstanceSpec,
    /// OS pid of the instance process while it runs.
    pub process_ref: Option<u32>,
    pub state: InstanceState,
    pub snapshot: SnapshotRef,
    pub last_reset_at_ms: u64,
    pub next_reset_at_ms: u64,
    pub reset_count: u64,
    pub endpoint: Option<SocketAddr>,
    pub enforcement: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResetRecord {
    pub at_ms: u64,
    pub digest_after: String,
    pub matched: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error("instance id or sandbox dir already in use")]
    DuplicateId,
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("no such instance")]
    UnknownInstance,
    #[error("instance is not running")]
    InstanceDown,
    #[error("failed to start instance: {0}")]
    SpawnFailed(String),
    #[error("snapshot failed: {0}")]
    SnapshotFailed(String),
    #[error("restore failed: {0}")]
    RestoreFailed(String),
    #[error("probe timed out")]
    ProbeTimeout,
    #[error("state file: {0}")]
    State(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

impl OrchestratorError {
    pub fn code(&self) -> &'static str {
        match self {
            OrchestratorError::DuplicateId => "DUPLICATE_ID",
            OrchestratorError::InvalidSpec(_) => "INVALID_SPEC",
            OrchestratorError::UnknownInstance => "UNKNOWN_INSTANCE",
            OrchestratorError::InstanceDown => "INSTANCE_DOWN",
            OrchestratorError::SpawnFailed(_) => "SPAWN_FAILED",
            OrchestratorError::SnapshotFailed(_) => "SNAPSHOT_FAILED",
            OrchestratorError::RestoreFailed(_) => "RESTORE_FAILED",
            OrchestratorError::ProbeTimeout => "PROBE_TIMEOUT",
            OrchestratorError::State(_) => "STATE_FILE",
            OrchestratorError::Instance(_) => "INSTANCE_ERROR",
        }
    }
}

type Result<T> = std::result::Result<T, OrchestratorError>;
type BoxFut<'a, T> = std::pin::Pin<Box<dyn std::future::Future<Output = T> + Send + 'a>>;

#[derive(Debug, Clone)]
pub struct OrchestratorConfig {
    pub data_dir: PathBuf,
    pub instance_program: PathBuf,
    pub registered_apps: Vec<String>,
}

impl OrchestratorConfig {
    pub fn new(data_dir: impl Into<PathBuf>, instance_program: impl Into<PathBuf>) -> Self {
        OrchestratorConfig {
            data_dir: data_dir.into(),
            instance_program: instance_program.into(),
            registered_apps: REGISTERED_APPS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn sandbox_root(&self) -> PathBuf {
        self.data_dir.join("sandboxes")
    }

    pub fn snapshot_root(&self) -> PathBuf {
        self.data_dir.join("snapshots")
    }
}

#[derive(Debug, Clone)]
struct Info {
    state: InstanceState,
    pid: Option<u32>,
    endpoint: Option<SocketAddr>,
    secret: String,
    enforcement: String,
    snapshot: SnapshotRef,
    last_reset_at_ms: u64,
    next_reset_at_ms: u64,
    reset_count: u64,
    period: Duration,
    history: Vec<ResetRecord>,
}

struct Life {
    child: Option<Child>,
    admin: Option<InstanceClient>,
}

struct Slot {
    spec: InstanceSpec,
    info: StdMutex<Info>,
    life: Mutex<Life>,
    reset_in_flight: AtomicBool,
}

impl Slot {
    fn info(&self) -> std::sync::MutexGuard<'_, Info> {
        self.info.lock().expect("info lock")
    }

    fn set_state(&self, next: InstanceState) {
        let mut i = self.info();
        debug_assert!(
            i.state == next || i.state.can_become(next),
            "{:?} -> {next:?}",
            i.state
        );
        i.state = next;
    }

    fn handle(&self) -> InstanceHandle {
        let i = self.info();
        let mut spec = self.spec.clone();
        spec.reset_period = i.period;
        InstanceHandle {
            spec,
            process_ref: i.pid,
            state: i.state,
            snapshot: i.snapshot.clone(),
            last_reset_at_ms: i.last_reset_at_ms,
            next_reset_at_ms: i.next_reset_at_ms,
            reset_count: i.reset_count,
            endpoint: i.endpoint,
            enforcement: i.enforcement.clone(),
        }
    }
}

struct Inner {
    config: OrchestratorConfig,
    slots: StdMutex<HashMap<Uuid, Arc<Slot>>>,
    events: broadcast::Sender<(Uuid, LifecycleEvent)>,
    persist_lock: StdMutex<()>,
}

/// Cheap to clone; all clones drive the same set of instances.
#[derive(Clone)]
pub struct Orchestrator {
    inner: Arc<Inner>,
}

struct Launched {
    child: Child,
    endpoint: SocketAddr,
    enforcement: String,
    admin: InstanceClient,
}

fn new_secret() -> String {
    hex::encode(rand::random::<[u8; 32]>())
}

impl Orchestrator {
    /// Opens the data directory. Instances recorded in the state file are
    /// brought back up; any whose reset deadline passed while the
    /// orchestrator was down are restored from their snapshot first.
    pub async fn open(config: OrchestratorConfig) -> Result<Self> {
        std::fs::create_dir_all(config.sandbox_root())
            .and_then(|_| std::fs::create_dir_all(config.snapshot_root()))
            .map_err(|e| OrchestratorError::State(e.to_string()))?;
        let (events, _) = broadcast::channel(1024);
        let orch = Orchestrator {
            inner: Arc::new(Inner {
                config,
                slots: StdMutex::new(HashMap::new()),
                events,
                persist_lock: StdMutex::new(()),
            }),
        };
        let saved = persist::load(&orch.state_path())?;
        for rec in saved.instances {
            orch.recover(rec).await?;
        }
        Ok(orch)
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.inner.config
    }

    fn state_path(&self) -> PathBuf {
        self.inner.config.data_dir.join(STATE_FILE)
    }

    pub fn subscribe(&self) -> broadcast::Receiver<(Uuid, LifecycleEvent)> {
        self.inner.events.subscribe()
    }

    fn emit(&self, id: Uuid, ev: LifecycleEvent) {
        let _ = self.inner.events.send((id, ev));
    }

    fn slot(&self, id: Uuid) -> Result<Arc<Slot>> {
        self.inner
            .slots
            .lock()
            .expect("slots lock")
            .get(&id)
            .cloned()
            .ok_or(OrchestratorError::UnknownInstance)
    }

    fn all_slots(&self) -> Vec<Arc<Slot>> {
        self.inner.slots.lock().expect("slots lock").values().cloned().collect()
    }

    pub fn handle(&self, id: Uuid) -> Result<InstanceHandle> {
        Ok(self.slot(id)?.handle())
    }

    pub fn handles(&self) -> Vec<InstanceHandle> {
        let mut v: Vec<_> = self.all_slots().iter().map(|s| s.handle()).collect();
        v.sort_by_key(|h| h.spec.instance_id);
        v
    }

    pub fn reset_history(&self, id: Uuid) -> Result<Vec<ResetRecord>> {
        Ok(self.slot(id)?.info().history.clone())
    }

    /// Instance routed from the given phone number, if any.
    pub fn instance_for_binding(&self, number: &str) -> Option<Uuid> {
        self.all_slots()
            .iter()
            .find(|s| s.spec.gateway_binding.as_deref() == Some(number))
            .map(|s| s.spec.instance_id)
    }

    fn persist(&self) -> Result<()> {
        let _g = self.inner.persist_lock.lock().expect("persist lock");
        let mut instances: Vec<_> = self
            .all_slots()
            .iter()
            .map(|s| {
                let i = s.info();
                persist::Record {
                    spec: InstanceSpec {
                        reset_period: i.period,
                        ..s.spec.clone()
                    },
                    snapshot: i.snapshot.clone(),
                    last_reset_at_ms: i.last_reset_at_ms,
                    next_reset_at_ms: i.next_reset_at_ms,
                    reset_count: i.reset_count,
                }
            })
            .collect();
        instances.sort_by_key(|r| r.spec.instance_id);
        persist::save(&self.state_path(), &persist::Saved { instances })
    }

    fn validate(&self, spec: &InstanceSpec) -> Result<()> {
        let name = spec.app_name.as_str();
        if name.is_empty() || name.contains(|c: char| c.is_whitespace() || c == ',' || c == ';') {
            return Err(OrchestratorError::InvalidSpec(
                "an instance runs exactly one app".into(),
            ));
        }
        if !self.inner.config.registered_apps.iter().any(|a| a == name) {
            return Err(OrchestratorError::InvalidSpec(format!("unknown app {name:?}")));
        }
        if spec.reset_period.is_zero() {
            return Err(OrchestratorError::InvalidSpec("reset period must be positive".into()));
        }
        if spec.sandbox_dir.as_os_str().is_empty() {
            return Err(OrchestratorError::InvalidSpec("sandbox dir required".into()));
        }
        Ok(())
    }

    fn archive_path(&self, id: Uuid) -> PathBuf {
        self.inner.config.snapshot_root().join(id.to_string())
    }

    /// Starts a new instance from a pristine sandbox.
    pub async fn create(&self, spec: InstanceSpec) -> Result<InstanceHandle> {
        self.validate(&spec)?;
        let id = spec.instance_id;
        let secret = new_secret();
        let placeholder = SnapshotRef {
            digest: String::new(),
            archive_path: self.archive_path(id),
        };
        let slot = Arc::new(Slot {
            spec: spec.clone(),
            info: StdMutex::new(Info {
                state: InstanceState::Starting,
                pid: None,
                endpoint: None,
                secret: secret.clone(),
                enforcement: String::new(),
                snapshot: placeholder,
                last_reset_at_ms: 0,
                next_reset_at_ms: 0,
                reset_count: 0,
                period: spec.reset_period,
                history: Vec::new(),
            }),
            life: Mutex::new(Life {
                child: None,
                admin: None,
            }),
            reset_in_flight: AtomicBool::new(false),
        });
        {
            let mut slots = self.inner.slots.lock().expect("slots lock");
            let clash = slots.contains_key(&id)
                || slots.values().any(|s| same_path(&s.spec.sandbox_dir, &spec.sandbox_dir));
            if clash {
                return Err(OrchestratorError::DuplicateId);
            }
            slots.insert(id, slot.clone());
        }
        let mut life = slot.life.lock().await;
        match self.bring_up(&slot, &secret).await {
            Ok(l) => {
                {
                    let mut i = slot.info();
                    i.pid = l.child.id();
                    i.endpoint = Some(l.endpoint);
                    i.enforcement = l.enforcement;
                }
                life.child = Some(l.child);
                life.admin = Some(l.admin);
                slot.set_state(InstanceState::Running);
                drop(life);
                self.persist()?;
                self.emit(id, LifecycleEvent::Started);
                tracing::info!(%id, app = %spec.app_name, "instance started");
                Ok(slot.handle())
            }
            Err(e) => {
                slot.set_state(InstanceState::Stopped);
                drop(life);
                self.inner.slots.lock().expect("slots lock").remove(&id);
                let _ = snapshot::remove_dir_if_exists(&self.archive_path(id));
                Err(e)
            }
        }
    }

    async fn bring_up(&self, slot: &Slot, secret: &str) -> Result<Launched> {
        let spec = &slot.spec;
        let dir = &spec.sandbox_dir;
        let occupied = std::fs::read_dir(dir).map(|mut d| d.next().is_some()).unwrap_or(false);
        if occupied {
            return Err(OrchestratorError::InvalidSpec(format!(
                "sandbox dir {} is not empty",
                dir.display()
            )));
        }
        let snap_err = |e: std::io::Error| OrchestratorError::SnapshotFailed(e.to_string());
        std::fs::create_dir_all(dir).map_err(snap_err)?;
        let marker = serde_json::json!({ "app": spec.app_name });
        std::fs::write(dir.join(APP_FILE), marker.to_string()).map_err(snap_err)?;
        std::fs::write(dir.join(EVENT_LOG), b"").map_err(snap_err)?;
        let snap = snapshot::take_snapshot(dir, &self.archive_path(spec.instance_id)).map_err(snap_err)?;
        let now = now_ms();
        {
            let mut i = slot.info();
            i.snapshot = snap;
            i.last_reset_at_ms = now;
            i.next_reset_at_ms = now + i.period.as_millis() as u64;
        }
        self.launch(spec, secret).await
    }

    async fn launch(&self, spec: &InstanceSpec, secret: &str) -> Result<Launched> {
        let spawn_err = |e: String| OrchestratorError::SpawnFailed(e);
        let mut child = Command::new(&self.inner.config.instance_program)
            .arg("--app")
            .arg(&spec.app_name)
            .arg("--dir")
            .arg(&spec.sandbox_dir)
            .arg("--control")
            .arg("127.0.0.1:0")
            .arg("--session")
            .arg(secret)
            .env_clear()
            .current_dir(&spec.sandbox_dir)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .kill_on_drop(true)
            .spawn()
            .map_err(|e| spawn_err(format!("{}: {e}", self.inner.config.instance_program.display())))?;
        let stdout = child.stdout.take().expect("stdout piped");
        let mut lines = BufReader::new(stdout).lines();
        let ready = tokio::time::timeout(READY_TIMEOUT, lines.next_line())
            .await
            .map_err(|_| spawn_err("no READY line".into()))?
            .map_err(|e| spawn_err(e.to_string()))?
            .ok_or_else(|| spawn_err("instance exited before READY".into()))?;
        let (endpoint, enforcement) = parse_ready(&ready).ok_or_else(|| spawn_err(format!("bad READY line {ready:?}")))?;
        // keep draining so the instance never blocks on a full pipe
        tokio::spawn(async move { while let Ok(Some(_)) = lines.next_line().await {} });
        let admin = InstanceClient::connect(endpoint, secret)
            .await
            .map_err(|e| spawn_err(e.to_string()))?;
        Ok(Launched {
            child,
            endpoint,
            enforcement,
            admin,
        })
    }

    async fn kill(life: &mut Life) {
        life.admin = None;
        if let Some(mut child) = life.child.take() {
            let _ = child.start_kill();
            let _ = child.wait().await;
        }
    }

    async fn recover(&self, rec: persist::Record) -> Result<()> {
        let id = rec.spec.instance_id;
        let secret = new_secret();
        let slot = Arc::new(Slot {
            spec: rec.spec.clone(),
            info: StdMutex::new(Info {
                state: InstanceState::Starting,
                pid: None,
                endpoint: None,
                secret: secret.clone(),
                enforcement: String::new(),
                snapshot: rec.snapshot.clone(),
                last_reset_at_ms: rec.last_reset_at_ms,
                next_reset_at_ms: rec.next_reset_at_ms,
                reset_count: rec.reset_count,
                period: rec.spec.reset_period,
                history: Vec::new(),
            }),
            life: Mutex::new(Life {
                child: None,
                admin: None,
            }),
            reset_in_flight: AtomicBool::new(false),
        });
        self.inner.slots.lock().expect("slots lock").insert(id, slot.clone());
        let mut life = slot.life.lock().await;
        let overdue = rec.next_reset_at_ms <= now_ms() || !rec.spec.sandbox_dir.exists();
        if overdue {
            match snapshot::restore(&rec.snapshot, &rec.spec.sandbox_dir) {
                Ok(d) => {
                    let now = now_ms();
                    let mut i = slot.info();
                    i.history.push(ResetRecord {
                        at_ms: now,
                        matched: d == rec.snapshot.digest,
                        digest_after: d,
                    });
                    i.last_reset_at_ms = now;
                    i.next_reset_at_ms = now + i.period.as_millis() as u64;
                    i.reset_count += 1;
                }
                Err(e) => {
                    slot.set_state(InstanceState::Stopped);
                    tracing::error!(%id, "restore on recovery failed: {e}");
                    return Ok(());
                }
            }
        }
        match self.launch(&rec.spec, &secret).await {
            Ok(l) => {
                {
                    let mut i = slot.info();
                    i.pid = l.child.id();
                    i.endpoint = Some(l.endpoint);
                    i.enforcement = l.enforcement;
                }
                life.child = Some(l.child);
                life.admin = Some(l.admin);
                slot.set_state(InstanceState::Running);
                self.emit(id, LifecycleEvent::Started);
            }
            Err(e) => {
                slot.set_state(InstanceState::Stopped);
                tracing::error!(%id, "relaunch on recovery failed: {e}");
            }
        }
        drop(life);
        self.persist()
    }

    /// Kills the instance, restores its sandbox from the snapshot and starts
    /// a fresh process. Runs whatever the instance was doing; there is no
    /// way for the app to postpone it.
    pub async fn reset(&self, id: Uuid) -> Result<InstanceHandle> {
        let slot = self.slot(id)?;
        let mut life = slot.life.lock().await;
        let state = slot.info().state;
        if state != InstanceState::Running {
            return Err(OrchestratorError::InstanceDown);
        }
        let started = now_ms();
        slot.set_state(InstanceState::Resetting);
        self.emit(id, LifecycleEvent::Resetting);
        Self::kill(&mut life).await;
        {
            let mut i = slot.info();
            i.pid = None;
            i.endpoint = None;
        }
        let snap = slot.info().snapshot.clone();
        let restored = snapshot::restore(&snap, &slot.spec.sandbox_dir);
        let digest = match restored {
            Ok(d) if d == snap.digest => d,
            Ok(d) => {
                slot.set_state(InstanceState::Stopped);
                drop(life);
                self.emit(id, LifecycleEvent::Stopped);
                return Err(OrchestratorError::RestoreFailed(format!(
                    "restored digest {d} != snapshot {}",
                    snap.digest
                )));
            }
            Err(e) => {
                slot.set_state(InstanceState::Stopped);
                drop(life);
                self.emit(id, LifecycleEvent::Stopped);
                return Err(OrchestratorError::RestoreFailed(e.to_string()));
            }
        };
        let count = {
            let mut i = slot.info();
            i.history.push(ResetRecord {
                at_ms: started,
                digest_after: digest,
                matched: true,
            });
            i.last_reset_at_ms = started;
            i.next_reset_at_ms = started + i.period.as_millis() as u64;
            i.reset_count += 1;
            i.secret = new_secret();
            i.reset_count
        };
        let secret = slot.info().secret.clone();
        match self.launch(&slot.spec, &secret).await {
            Ok(l) => {
                {
                    let mut i = slot.info();
                    i.pid = l.child.id();
                    i.endpoint = Some(l.endpoint);
                    i.enforcement = l.enforcement;
                }
                life.child = Some(l.child);
                life.admin = Some(l.admin);
                slot.set_state(InstanceState::Running);
                drop(life);
                self.persist()?;
                self.emit(id, LifecycleEvent::Reset { count });
                tracing::info!(%id, count, "instance reset");
                Ok(slot.handle())
            }
            Err(e) => {
                slot.set_state(InstanceState::Stopped);
                drop(life);
                self.persist()?;
                self.emit(id, LifecycleEvent::Stopped);
                Err(e)
            }
        }
    }

    /// Stops the instance and deletes its sandbox and snapshot. Destroying
    /// an unknown or already destroyed instance is a no-op.
    pub async fn destroy(&self, id: Uuid) -> Result<()> {
        let Ok(slot) = self.slot(id) else { return Ok(()) };
        let mut life = slot.life.lock().await;
        Self::kill(&mut life).await;
        {
            let mut i = slot.info();
            i.state = InstanceState::Stopped;
            i.pid = None;
            i.endpoint = None;
        }
        let removed = self.inner.slots.lock().expect("slots lock").remove(&id).is_some();
        drop(life);
        if !removed {
            return Ok(());
        }
        let _ = snapshot::remove_dir_if_exists(&slot.spec.sandbox_dir);
        let _ = snapshot::remove_dir_if_exists(&self.archive_path(id));
        self.persist()?;
        self.emit(id, LifecycleEvent::Terminated);
        tracing::info!(%id, "instance destroyed");
        Ok(())
    }

    /// Kills every instance process but keeps the state file, so the next
    /// `open` on this data directory brings the instances back.
    pub async fn shutdown(&self) {
        let slots: Vec<_> = self.inner.slots.lock().expect("slots lock").values().cloned().collect();
        for slot in slots {
            let mut life = slot.life.lock().await;
            Self::kill(&mut life).await;
            let mut i = slot.info();
            i.state = InstanceState::Stopped;
            i.pid = None;
            i.endpoint = None;
        }
    }

    pub fn set_reset_period(&self, id: Uuid, period: Duration) -> Result<InstanceHandle> {
        if period.is_zero() {
            return Err(OrchestratorError::InvalidSpec("reset period must be positive".into()));
        }
        let slot = self.slot(id)?;
        {
            let mut i = slot.info();
            i.period = period;
            i.next_reset_at_ms = i.last_reset_at_ms + period.as_millis() as u64;
        }
        self.persist()?;
        Ok(slot.handle())
    }

    /// Address and secret for a fresh control connection, if running.
    pub fn endpoint(&self, id: Uuid) -> Result<(SocketAddr, String)> {
        let slot = self.slot(id)?;
        let i = slot.info();
        match (i.state, i.endpoint) {
            (InstanceState::Running, Some(addr)) => Ok((addr, i.secret.clone())),
            _ => Err(OrchestratorError::InstanceDown),
        }
    }

    pub async fn connect(&self, id: Uuid) -> Result<InstanceClient> {
        let (addr, secret) = self.endpoint(id)?;
        Ok(InstanceClient::connect(addr, &secret).await?)
    }

    async fn with_admin<T>(
        &self,
        id: Uuid,
        f: impl for<'a> FnOnce(&'a mut InstanceClient) -> BoxFut<'a, std::result::Result<T, InstanceError>>,
    ) -> Result<T> {
        let slot = self.slot(id)?;
        let mut life = slot.life.lock().await;
        if slot.info().state != InstanceState::Running {
            return Err(OrchestratorError::InstanceDown);
        }
        let admin = life.admin.as_mut().ok_or(OrchestratorError::InstanceDown)?;
        Ok(f(admin).await?)
    }

    /// Delivers an inbound message. Waits for an in-progress reset.
    pub async fn deliver(&self, id: Uuid, msg: ChatMessage) -> Result<Ack> {
        self.with_admin(id, |c| Box::pin(c.deliver(msg))).await
    }

    pub async fn status(&self, id: Uuid) -> Result<InstanceStatus> {
        self.with_admin(id, |c| Box::pin(c.status())).await
    }

    /// Recomputes the live sandbox digest.
    pub fn sandbox_digest(&self, id: Uuid) -> Result<String> {
        let slot = self.slot(id)?;
        digest_dir(&slot.spec.sandbox_dir).map_err(|e| OrchestratorError::SnapshotFailed(e.to_string()))
    }

    pub fn data_dir(&self) -> &Path {
        &self.inner.config.data_dir
    }
}


fn same_path(a: &Path, b: &Path) -> bool {
    let canon = |p: &Path| std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    a == b || canon(a) == canon(b)
}

fn parse_ready(line: &str) -> Option<(SocketAddr, String)> {
    let rest = line.strip_prefix("READY ")?;
    let (addr, enforcement) = rest.split_once(' ').unwrap_or((rest, ""));
    Some((addr.parse().ok()?, enforcement.to_string()))
}
