//! Measure input lag through an impaired link and print the result as a
//! markdown table, one column per simulated network.
//!
//! ```bash
//! cargo build -p zc-core --bins && cargo run -p zc-core --example lag_probe
//! ```

use std::time::Duration;

use zc_core::deploy::{locate_instance_program, DeployConfig, Deployment};
use zc_core::metrics::{inject_network_delay, lag_markdown, run_lag_probe, Impairment, ProbeOptions};
use zc_core::session::{Hello, SessionClient, Want};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let mut cfg = DeployConfig::minimal(dir.path().join("data"), &["signal"]);
    cfg.instance_program = Some(locate_instance_program()?);
    cfg.instances[0].users = vec!["alice".into()];
    cfg.test_impairment = Some(Impairment::new(0.0, 0.0));
    let dep = Deployment::start(cfg).await?;
    let shim = dep.shim().expect("impairment shim");
    let cred = &dep.credentials[0];

    let mut reports = Vec::new();
    for (label, one_way, jitter) in [("loopback", 0.0, 0.0), ("wifi-like", 15.0, 5.0), ("lte-like", 60.0, 20.0)] {
        inject_network_delay(shim, one_way, jitter);
        let hello = Hello::login(&cred.credential(), cred.instance).with_want(&[Want::Control]);
        let mut c = SessionClient::connect_direct(dep.session_addr(), &hello).await?;
        let opts = ProbeOptions::default()
            .with_duration(Duration::from_secs(3))
            .with_labels(label, "headless");
        let r = run_lag_probe(&mut c, &opts).await?;
        eprintln!("{label}: {} samples, {} lost", r.samples.len(), r.losses);
        reports.push(r);
        c.close().await;
    }
    print!("{}", lag_markdown(&reports));
    dep.shutdown().await;
    Ok(())
}
