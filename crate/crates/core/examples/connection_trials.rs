//! Run repeated connect-and-hold trials against a local deployment and print
//! the outcome table.
//!
//! ```bash
//! cargo build -p zc-core --bins && cargo run -p zc-core --example connection_trials
//! ```

use std::time::Duration;

use zc_core::deploy::{locate_instance_program, DeployConfig, Deployment};
use zc_core::metrics::{run_connection_trials, soak_markdown, TrialOptions};
use zc_core::session::{Hello, SessionClient};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let mut cfg = DeployConfig::minimal(dir.path().join("data"), &["sms"]);
    cfg.instance_program = Some(locate_instance_program()?);
    cfg.instances[0].users = vec!["alice".into()];
    let dep = Deployment::start(cfg).await?;
    let addr = dep.session_addr();
    let hello = Hello::login(&dep.credentials[0].credential(), dep.credentials[0].instance);

    let opts = TrialOptions {
        hold: Duration::from_secs(1),
        network_label: "loopback".into(),
        ..TrialOptions::default()
    };
    let report = run_connection_trials(10, || SessionClient::connect_direct(addr, &hello), &opts).await;
    for t in &report.trials {
        eprintln!("#{:<2} {:<10} {:.2}s {} frames", t.attempt_index, t.outcome.label(), t.duration_s, t.frames);
    }
    print!("{}", soak_markdown(&[report]));
    dep.shutdown().await;
    Ok(())
}
