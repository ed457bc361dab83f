//! Create two sandboxed instances, compromise one, audit it, and reset it
//! back to its snapshot.
//!
//! ```bash
//! cargo build -p zc-core --bins && cargo run -p zc-core --example sandbox_lifecycle
//! ```

use std::time::Duration;

use zc_core::app::{ChatMessage, EXPLOIT_TRIGGER};
use zc_core::deploy::locate_instance_program;
use zc_core::orchestrator::{InstanceSpec, Orchestrator, OrchestratorConfig};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let orch = Orchestrator::open(OrchestratorConfig::new(dir.path(), locate_instance_program()?)).await?;
    let root = orch.config().sandbox_root();
    let a = orch
        .create(InstanceSpec::new("sms", root.join("sms")).with_reset_period(Duration::from_secs(600)))
        .await?;
    let b = orch.create(InstanceSpec::new("signal", root.join("signal"))).await?;
    let (aid, bid) = (a.spec.instance_id, b.spec.instance_id);
    println!("sms    {aid} pid {:?} ({})", a.process_ref, a.enforcement);
    println!("signal {bid} pid {:?}", b.process_ref);
    println!("snapshot digest {}", a.snapshot.digest);

    orch.deliver(bid, ChatMessage::inbound("+15550002", "a private note", 1)).await?;
    orch.deliver(aid, ChatMessage::inbound("+15550001", format!("{EXPLOIT_TRIGGER}crafted"), 2)).await?;
    println!("\nsms compromised: {}", orch.status(aid).await?.compromised);
    println!("sms digest now  {}", orch.sandbox_digest(aid)?);

    let attacker = std::net::TcpListener::bind("127.0.0.1:0")?;
    let report = orch.audit_isolation(aid, Some(attacker.local_addr()?)).await?;
    for r in &report.records {
        println!("  {:?} -> {:?}: {:?} {}", r.action, r.target, r.outcome, r.evidence);
    }
    println!("confinement held: {}", report.confinement_held());
    println!("siblings unchanged: {}", report.siblings_unchanged());

    let h = orch.reset(aid).await?;
    println!("\nafter reset #{}: digest {}", h.reset_count, orch.sandbox_digest(aid)?);
    println!("matches snapshot: {}", orch.sandbox_digest(aid)? == h.snapshot.digest);
    println!("compromised: {}", orch.status(aid).await?.compromised);

    orch.destroy(aid).await?;
    orch.destroy(bid).await?;
    Ok(())
}
