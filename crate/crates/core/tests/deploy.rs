use std::time::Duration;

use zc_core::deploy::{read_credentials, DeployConfig, Deployment, CREDENTIALS_FILE};
use zc_core::gateway::{run_mock_gateway, sign, MockGatewayConfig, SenderPolicy, SIGNATURE_HEADER};
use zc_core::metrics::{run_lag_probe, Impairment, ProbeOptions};
use zc_core::session::{Hello, SessionClient, Want};
use zc_core::wire::{InputEvent, InputKind, KEY_ENTER};

fn config(dir: &std::path::Path) -> DeployConfig {
    let mut c = DeployConfig::minimal(dir.join("data"), &["signal"]);
    c.instance_program = Some(env!("CARGO_BIN_EXE_zc-instance").into());
    c.http_listen = Some("127.0.0.1:0".parse().unwrap());
    c.webhook_secret = Some("hook-secret".into());
    c.instances[0].binding = Some("+15550100".into());
    c.instances[0].users = vec!["alice".into()];
    c.instances[0].policy = Some(SenderPolicy::allowlist(["+15550199".to_string()]));
    c
}

#[tokio::test]
async fn config_roundtrip_from_json() {
    let json = r#"{
        "data_dir": "/tmp/x",
        "session_listen": "127.0.0.1:7000",
        "http_listen": "127.0.0.1:7001",
        "test_impairment": {"one_way_ms": 50, "jitter_ms": 5},
        "instances": [{"app": "sms", "binding": "+1555", "reset_period_ms": 2000,
                       "policy": {"mode": "allow_all"}}]
    }"#;
    let c: DeployConfig = serde_json::from_str(json).unwrap();
    assert_eq!(c.fps, 10);
    assert_eq!(c.test_impairment, Some(Impairment::new(50.0, 5.0)));
    assert_eq!(c.instances[0].reset_period_ms, Some(2000));
    assert!(c.default_policy.allowed.is_empty());
}

#[tokio::test]
async fn serve_issues_credentials_routes_sms_and_recovers() {
    let dir = tempfile::tempdir().unwrap();
    let mock = run_mock_gateway(
        tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap(),
        MockGatewayConfig {
            token: "gw-token".into(),
            webhook_base: None,
            webhook_secret: vec![],
        },
    )
    .unwrap();
    let mut cfg = config(dir.path());
    cfg.gateway_url = Some(mock.url());
    cfg.gateway_token = Some("gw-token".into());
    let dep = Deployment::start(cfg.clone()).await.unwrap();
    let creds = read_credentials(&dir.path().join("data").join(CREDENTIALS_FILE)).unwrap();
    assert_eq!(creds, dep.credentials);
    assert_eq!(creds.len(), 1);
    let id = dep.instances[0];

    let hook = serde_json::json!({"message_id": "m1", "from": "+15550199", "to": "+15550100", "body": "hi there"});
    let body = serde_json::to_vec(&hook).unwrap();
    let resp = reqwest::Client::new()
        .post(format!("http://{}/webhook/sms", dep.http_addr().unwrap()))
        .header(SIGNATURE_HEADER, sign(b"hook-secret", &body))
        .body(body)
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 200);
    let log = std::fs::read_to_string(dep.orchestrator.handle(id).unwrap().spec.sandbox_dir.join("events.ndjson")).unwrap();
    assert!(log.contains("hi there"));

    // typing a reply goes out through the outbox to the mock gateway
    let mut c = SessionClient::connect_direct(dep.session_addr(), &Hello::login(&creds[0].credential(), id))
        .await
        .unwrap();
    c.next_frame(Duration::from_secs(5)).await.unwrap();
    for (seq, kind) in [
        (1, InputKind::Text { text: "yo".into() }),
        (2, InputKind::Key { keycode: KEY_ENTER, pressed: true }),
    ] {
        c.send_input(&InputEvent { seq, client_time_ms: 0, kind }).await.unwrap();
    }
    let mut sent = Vec::new();
    for _ in 0..50 {
        sent = mock.ledger();
        if !sent.is_empty() {
            break;
        }
        tokio::time::sleep(Duration::from_millis(100)).await;
    }
    assert_eq!(sent.len(), 1);
    assert_eq!(sent[0].body, "yo");
    c.close().await;

    dep.shutdown().await;
    let again = Deployment::start(cfg).await.unwrap();
    assert_eq!(again.instances, vec![id]);
    again.shutdown().await;
}

#[tokio::test]
async fn test_impairment_fronts_the_session_listener() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.test_impairment = Some(Impairment::new(40.0, 0.0));
    let dep = Deployment::start(cfg).await.unwrap();
    let cred = &dep.credentials[0];
    let hello = Hello::login(&cred.credential(), cred.instance).with_want(&[Want::Control]);
    let mut c = SessionClient::connect_direct(dep.session_addr(), &hello).await.unwrap();
    let r = run_lag_probe(&mut c, &ProbeOptions::default().with_duration(Duration::from_secs(2)))
        .await
        .unwrap();
    let mean = r.mean_lag_ms().unwrap();
    assert!((mean - 40.0).abs() <= 9.0, "mean lag {mean}");
    dep.shutdown().await;
}
