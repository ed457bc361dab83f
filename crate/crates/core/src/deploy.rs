//! One-process deployment assembled from a JSON config: orchestrator,
//! reset scheduler, session listener, optional relay, HTTP front (webhook,
//! snapshot, login, WebSocket bridge, static web root) and outbox worker.

use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::mpsc;
use tokio::task::JoinHandle;
use uuid::Uuid;

use crate::gateway::{self, Gateway, OutboundRequest, Outbox, OutboxConfig, Policies, SenderPolicy, QUARANTINE_FILE};
use crate::metrics::{Impairment, ImpairmentShim};
use crate::orchestrator::{
    InstanceSpec, Orchestrator, OrchestratorConfig, OrchestratorError, SchedulerHandle, DEFAULT_RESET_PERIOD,
};
use crate::session::relay::{self, RelayServer};
use crate::session::{self, Credential, CredentialStore, SessionConfig, SessionService};
use crate::wire::KeyframeMode;

pub const CREDENTIALS_FILE: &str = "credentials.json";

fn default_fps() -> u32 {
    10
}

fn default_ttl_s() -> u64 {
    24 * 3600
}

fn default_tick_ms() -> u64 {
    250
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceConfig {
    pub app: String,
    /// Phone number the SMS gateway routes to this instance.
    #[serde(default)]
    pub binding: Option<String>,
    #[serde(default)]
    pub reset_period_ms: Option<u64>,
    #[serde(default)]
    pub policy: Option<SenderPolicy>,
    /// Usernames that get a temporary credential for this instance.
    #[serde(default)]
    pub users: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeployConfig {
    pub data_dir: PathBuf,
    /// Defaults to `zc-instance` next to the running executable.
    #[serde(default)]
    pub instance_program: Option<PathBuf>,
    pub session_listen: SocketAddr,
    #[serde(default)]
    pub http_listen: Option<SocketAddr>,
    #[serde(default)]
    pub relay_listen: Option<SocketAddr>,
    #[serde(default)]
    pub relay_secret: Option<String>,
    /// Registers this server with a relay under this service name.
    #[serde(default)]
    pub relay_service: Option<String>,
    /// Relay to register with; defaults to `relay_listen`.
    #[serde(default)]
    pub relay_connect: Option<SocketAddr>,
    #[serde(default = "default_fps")]
    pub fps: u32,
    #[serde(default)]
    pub keyframe_mode: KeyframeMode,
    #[serde(default)]
    pub instances: Vec<InstanceConfig>,
    #[serde(default = "default_ttl_s")]
    pub credential_ttl_s: u64,
    #[serde(default)]
    pub gateway_url: Option<String>,
    #[serde(default)]
    pub gateway_token: Option<String>,
    #[serde(default)]
    pub webhook_secret: Option<String>,
    /// Policy for instances without their own.
    #[serde(default)]
    pub default_policy: SenderPolicy,
    /// Delays the session listener's traffic; for lag measurements.
    #[serde(default)]
    pub test_impairment: Option<Impairment>,
    #[serde(default = "default_tick_ms")]
    pub scheduler_tick_ms: u64,
    #[serde(default)]
    pub web_root: Option<PathBuf>,
}

impl DeployConfig {
    pub fn from_file(path: &Path) -> Result<Self, DeployError> {
        let text = std::fs::read_to_string(path).map_err(|e| DeployError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| DeployError::Config(format!("{}: {e}", path.display())))
    }

    /// A config with one instance per app and nothing else enabled.
    pub fn minimal(data_dir: impl Into<PathBuf>, apps: &[&str]) -> Self {
        DeployConfig {
            data_dir: data_dir.into(),
            instance_program: None,
            session_listen: SocketAddr::from(([127, 0, 0, 1], 0)),
            http_listen: None,
            relay_listen: None,
            relay_secret: None,
            relay_service: None,
            relay_connect: None,
            fps: default_fps(),
            keyframe_mode: KeyframeMode::Raw,
            instances: apps
                .iter()
                .map(|a| InstanceConfig {
                    app: a.to_string(),
                    binding: None,
                    reset_period_ms: None,
                    policy: None,
                    users: vec![],
                })
                .collect(),
            credential_ttl_s: default_ttl_s(),
            gateway_url: None,
            gateway_token: None,
            webhook_secret: None,
            default_policy: SenderPolicy::default(),
            test_impairment: None,
            scheduler_tick_ms: default_tick_ms(),
            web_root: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DeployError {
    #[error("config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
}

/// Credential as written to `<data_dir>/credentials.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuedCredential {
    pub username: String,
    pub token: String,
    pub expires_at_ms: u64,
    pub instance: Uuid,
    pub app: String,
}

impl IssuedCredential {
    pub fn credential(&self) -> Credential {
        Credential {
            username: self.username.clone(),
            token: self.token.clone(),
            expires_at_ms: self.expires_at_ms,
        }
    }
}

pub fn read_credentials(path: &Path) -> std::io::Result<Vec<IssuedCredential>> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

pub struct Deployment {
    pub orchestrator: Orchestrator,
    pub sessions: SessionService,
    pub gateway: Option<Arc<Gateway>>,
    pub outbox: Option<Arc<Outbox>>,
    pub credentials: Vec<IssuedCredential>,
    pub instances: Vec<Uuid>,
    session_addr: SocketAddr,
    http_addr: Option<SocketAddr>,
    relay_addr: Option<SocketAddr>,
    shim: Option<ImpairmentShim>,
    _scheduler: SchedulerHandle,
    tasks: Vec<JoinHandle<()>>,
}

impl Deployment {
    pub async fn start(config: DeployConfig) -> Result<Deployment, DeployError> {
        let program = match &config.instance_program {
            Some(p) => p.clone(),
            None => locate_instance_program()?,
        };
        std::fs::create_dir_all(&config.data_dir)?;
        let orch = Orchestrator::open(OrchestratorConfig::new(&config.data_dir, program)).await?;

        let mut instances = Vec::new();
        let mut policies = Policies {
            default: config.default_policy.clone(),
            ..Policies::default()
        };
        for (i, ic) in config.instances.iter().enumerate() {
            let id = ensure_instance(&orch, i, ic).await?;
            if let Some(p) = &ic.policy {
                policies.per_instance.insert(id, p.clone());
            }
            instances.push(id);
        }
        let scheduler = orch.schedule_resets(Duration::from_millis(config.scheduler_tick_ms.max(10)));

        let mut tasks = Vec::new();
        let (outbound_tx, outbound_rx) = mpsc::unbounded_channel();
        let outbox = match &config.gateway_url {
            Some(url) => {
                let token = config.gateway_token.clone().unwrap_or_default();
                let outbox = Outbox::new(OutboxConfig::new(url.clone(), token));
                tasks.push(outbox.spawn_worker(outbound_rx, Duration::from_secs(5)));
                Some(outbox)
            }
            None => {
                tasks.push(tokio::spawn(log_outbound(outbound_rx)));
                None
            }
        };

        let store = Arc::new(CredentialStore::new());
        let session_config = SessionConfig {
            fps: config.fps.max(1),
            keyframe_mode: config.keyframe_mode,
            ..SessionConfig::default()
        };
        let svc = SessionService::new(orch.clone(), store.clone(), session_config, Some(outbound_tx));

        let ttl = Duration::from_secs(config.credential_ttl_s);
        let mut credentials = Vec::new();
        for (ic, &id) in config.instances.iter().zip(&instances) {
            for user in &ic.users {
                let c = store.issue(user, id, ttl);
                credentials.push(IssuedCredential {
                    username: c.username,
                    token: c.token,
                    expires_at_ms: c.expires_at_ms,
                    instance: id,
                    app: ic.app.clone(),
                });
            }
        }
        write_credentials(&config.data_dir.join(CREDENTIALS_FILE), &credentials)?;

        // with an impairment the public address is the shim's
        let (session_addr, shim) = match config.test_impairment {
            Some(imp) => {
                let inner = TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], 0))).await?;
                let upstream = inner.local_addr()?;
                tasks.push(svc.serve(inner));
                let shim = ImpairmentShim::start(config.session_listen, upstream, imp).await?;
                (shim.addr(), Some(shim))
            }
            None => {
                let l = TcpListener::bind(config.session_listen).await?;
                let addr = l.local_addr()?;
                tasks.push(svc.serve(l));
                (addr, None)
            }
        };

        let relay_addr = match config.relay_listen {
            Some(addr) => {
                let l = TcpListener::bind(addr).await?;
                let bound = l.local_addr()?;
                tasks.push(RelayServer::new(config.relay_secret.clone()).serve(l));
                Some(bound)
            }
            None => None,
        };
        if let Some(service) = &config.relay_service {
            let Some(target) = config.relay_connect.or(relay_addr) else {
                return Err(DeployError::Config("relay_service needs relay_connect or relay_listen".into()));
            };
            tasks.push(relay::run_agent(target, service.clone(), config.relay_secret.clone(), svc.clone()));
        }

        let gateway = config.webhook_secret.as_ref().map(|secret| {
            let sink: Arc<dyn gateway::MessageSink> = Arc::new(orch.clone());
            Arc::new(Gateway::new(
                secret.as_bytes().to_vec(),
                sink,
                policies,
                config.data_dir.join(QUARANTINE_FILE),
            ))
        });

        let http_addr = match config.http_listen {
            Some(addr) => {
                let mut app = session::http_router(svc.clone());
                if let Some(gw) = &gateway {
                    app = app.merge(gateway::router(gw.clone()));
                }
                if let Some(root) = &config.web_root {
                    app = app.merge(static_router(root.clone()));
                }
                let l = TcpListener::bind(addr).await?;
                let bound = l.local_addr()?;
                tasks.push(tokio::spawn(async move {
                    if let Err(e) = axum::serve(l, app).await {
                        tracing::error!("http listener: {e}");
                    }
                }));
                Some(bound)
            }
            None => None,
        };

        tracing::info!(%session_addr, ?http_addr, ?relay_addr, instances = instances.len(), "deployment up");
        Ok(Deployment {
            orchestrator: orch,
            sessions: svc,
            gateway,
            outbox,
            credentials,
            instances,
            session_addr,
            http_addr,
            relay_addr,
            shim,
            _scheduler: scheduler,
            tasks,
        })
    }

    pub fn session_addr(&self) -> SocketAddr {
        self.session_addr
    }

    pub fn http_addr(&self) -> Option<SocketAddr> {
        self.http_addr
    }

    pub fn relay_addr(&self) -> Option<SocketAddr> {
        self.relay_addr
    }

    pub fn shim(&self) -> Option<&ImpairmentShim> {
        self.shim.as_ref()
    }

    /// Stops listeners and instance processes. State stays on disk.
    pub async fn shutdown(self) {
        for t in &self.tasks {
            t.abort();
        }
        self.orchestrator.shutdown().await;
    }
}

/// Reuses a recovered instance for slot `index`, or creates it.
async fn ensure_instance(orch: &Orchestrator, index: usize, ic: &InstanceConfig) -> Result<Uuid, DeployError> {
    let dir = orch.config().sandbox_root().join(format!("{index}-{}", ic.app));
    if let Some(h) = orch.handles().into_iter().find(|h| h.spec.sandbox_dir == dir) {
        if h.spec.app_name != ic.app {
            return Err(DeployError::Config(format!(
                "{} holds app {:?}, config says {:?}",
                dir.display(),
                h.spec.app_name,
                ic.app
            )));
        }
        let id = h.spec.instance_id;
        if let Some(ms) = ic.reset_period_ms {
            orch.set_reset_period(id, Duration::from_millis(ms))?;
        }
        return Ok(id);
    }
    let mut spec = InstanceSpec::new(&ic.app, dir)
        .with_reset_period(ic.reset_period_ms.map(Duration::from_millis).unwrap_or(DEFAULT_RESET_PERIOD));
    if let Some(b) = &ic.binding {
        spec = spec.with_binding(b);
    }
    Ok(orch.create(spec).await?.spec.instance_id)
}

/// `$ZC_INSTANCE_BIN`, else `zc-instance` next to (or one directory above)
/// the running executable.
pub fn locate_instance_program() -> Result<PathBuf, DeployError> {
    if let Some(p) = std::env::var_os("ZC_INSTANCE_BIN") {
        return Ok(p.into());
    }
    let name = "zc-instance";
    let exe = std::env::current_exe()?;
    let dir = exe.parent().ok_or_else(|| DeployError::Config("no executable directory".into()))?;
    let candidate = dir.join(name);
    if candidate.exists() {
        return Ok(candidate);
    }
    // test and example binaries live one level below the bins
    match dir.parent().map(|d| d.join(name)) {
        Some(p) if p.exists() => Ok(p),
        _ => Err(DeployError::Config(format!(
            "{name} not found next to {}; run `cargo build --bins` or set ZC_INSTANCE_BIN",
            exe.display()
        ))),
    }
}

fn write_credentials(path: &Path, creds: &[IssuedCredential]) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_vec_pretty(creds).expect("serialises"))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&tmp, std::fs::Permissions::from_mode(0o600))?;
    }
    std::fs::rename(tmp, path)
}

async fn log_outbound(mut rx: mpsc::UnboundedReceiver<session::OutboundChat>) {
    while let Some(m) = rx.recv().await {
        let req = OutboundRequest::new(m.message.sender, m.message.body);
        tracing::info!(instance = %m.instance_id, to = %req.to, "outbound message (no gateway configured)");
    }
}

fn static_router(root: PathBuf) -> Router {
    Router::new()
        .route("/", get(|State(root): State<Arc<PathBuf>>| async move { serve_file(&root, "index.html").await }))
        .route(
            "/static/{*path}",
            get(|State(root): State<Arc<PathBuf>>, UrlPath(path): UrlPath<String>| async move {
                serve_file(&root, &path).await
            }),
        )
        .with_state(Arc::new(root))
}

async fn serve_file(root: &Path, rel: &str) -> Response {
    let rel = Path::new(rel);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return StatusCode::NOT_FOUND.into_response();
    }
    match tokio::fs::read(root.join(rel)).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(rel))], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") => "text/javascript",
        Some("css") => "text/css",
        Some("png") => "image/png",
        Some("json") => "application/json",
        Some("wasm") => "application/wasm",
        _ => "application/octet-stream",
    }
}
