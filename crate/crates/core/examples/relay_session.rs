//! Reach an instance through the relay only, as a client behind NAT would,
//! and type a message into it.
//!
//! ```bash
//! cargo build -p zc-core --bins && cargo run -p zc-core --example relay_session
//! ```

use std::time::Duration;

use zc_core::deploy::{locate_instance_program, DeployConfig, Deployment};
use zc_core::session::{ConnectOptions, Hello, RelayRoute, SessionClient};
use zc_core::wire::{InputEvent, InputKind};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let mut cfg = DeployConfig::minimal(dir.path().join("data"), &["whatsapp"]);
    cfg.instance_program = Some(locate_instance_program()?);
    cfg.instances[0].users = vec!["alice".into()];
    cfg.relay_listen = Some("127.0.0.1:0".parse()?);
    cfg.relay_service = Some("home-box".into());
    cfg.relay_secret = Some("relay-secret".into());
    let dep = Deployment::start(cfg).await?;
    let relay = dep.relay_addr().expect("relay listener");
    println!("relay on {relay}");

    // the agent registers asynchronously
    tokio::time::sleep(Duration::from_millis(200)).await;

    let cred = &dep.credentials[0];
    let opts = ConnectOptions {
        direct: None,
        relay: Some(RelayRoute { addr: relay, service: "home-box".into() }),
        direct_timeout: None,
    };
    let mut c = SessionClient::connect(&opts, &Hello::login(&cred.credential(), cred.instance)).await?;
    println!("session {} via {:?}", c.session_id(), c.transport());

    let (id, enc, frame) = c.next_frame(Duration::from_secs(5)).await?;
    println!("first frame #{id} {enc:?} {}x{}", frame.width(), frame.height());

    c.send_input(&InputEvent { seq: 1, client_time_ms: c.clock_ms(), kind: InputKind::Text { text: "hello over relay".into() } })
        .await?;
    let (id, enc, _) = c.next_frame(Duration::from_secs(5)).await?;
    println!("after typing: frame #{id} {enc:?}");

    let ack = c.send_probe(1).await?;
    println!("probe sent at client ms {}", ack.client_time_ms);

    c.close().await;
    dep.shutdown().await;
    Ok(())
}
