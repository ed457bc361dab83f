//! Route SMS from a mock provider into an instance. One sender is on the
//! allowlist and one is not; the blocked message lands in quarantine. A
//! reply typed in the app leaves through the outbox.
//!
//! ```bash
//! cargo build -p zc-core --bins && cargo run -p zc-core --example sms_gateway
//! ```

use std::time::Duration;

use zc_core::deploy::{locate_instance_program, DeployConfig, Deployment};
use zc_core::gateway::{run_mock_gateway, InjectRequest, InjectResult, MockGatewayConfig, SenderPolicy, QUARANTINE_FILE};
use zc_core::session::{Hello, SessionClient, Want};
use zc_core::wire::{InputEvent, InputKind, KEY_ENTER};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let mock = run_mock_gateway(
        tokio::net::TcpListener::bind("127.0.0.1:0").await?,
        MockGatewayConfig { token: "gw-token".into(), webhook_base: None, webhook_secret: b"hook-secret".to_vec() },
    )?;

    let data = dir.path().join("data");
    let mut cfg = DeployConfig::minimal(&data, &["sms"]);
    cfg.instance_program = Some(locate_instance_program()?);
    cfg.instances[0].users = vec!["alice".into()];
    cfg.http_listen = Some("127.0.0.1:0".parse()?);
    cfg.webhook_secret = Some("hook-secret".into());
    cfg.gateway_url = Some(mock.url());
    cfg.gateway_token = Some("gw-token".into());
    cfg.instances[0].binding = Some("+15550100".into());
    cfg.instances[0].policy = Some(SenderPolicy::allowlist(["+15550001".to_string()]));
    let dep = Deployment::start(cfg).await?;
    mock.set_webhook_base(&format!("http://{}", dep.http_addr().expect("http")));

    let http = reqwest::Client::new();
    for (from, body) in [("+15550001", "your code is 4821"), ("+15559999", "you won a prize")] {
        let req = InjectRequest { from: from.into(), to: "+15550100".into(), body: body.into(), message_id: None, unsigned: false };
        let r: InjectResult = http.post(format!("{}/inject", mock.url())).json(&req).send().await?.json().await?;
        println!("{from}: HTTP {} {}", r.status, r.response);
    }
    let unsigned = InjectRequest { from: "+15550001".into(), to: "+15550100".into(), body: "forged".into(), message_id: None, unsigned: true };
    let r: InjectResult = http.post(format!("{}/inject", mock.url())).json(&unsigned).send().await?.json().await?;
    println!("unsigned: HTTP {}", r.status);

    let q = std::fs::read_to_string(data.join(QUARANTINE_FILE)).unwrap_or_default();
    println!("\nquarantine:\n{q}");

    let cred = &dep.credentials[0];
    let hello = Hello::login(&cred.credential(), cred.instance).with_want(&[Want::Input]);
    let c = SessionClient::connect_direct(dep.session_addr(), &hello).await?;
    for (seq, kind) in [
        (1, InputKind::Text { text: "thanks".into() }),
        (2, InputKind::Key { keycode: KEY_ENTER, pressed: true }),
    ] {
        c.send_input(&InputEvent { seq, client_time_ms: 0, kind }).await?;
    }
    for _ in 0..50 {
        if !mock.ledger().is_empty() {
            break;
        }
        tokio::time::sleep(Duration::from_millis(100)).await;
    }
    for e in mock.ledger() {
        println!("sent {} to {}: {:?}", e.id, e.to, e.body);
    }

    c.close().await;
    dep.shutdown().await;
    Ok(())
}
