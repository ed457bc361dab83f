//! The instance process (`zc-instance`) and the client used to drive it.

mod client;
pub mod confine;
mod process;
pub mod proto;

pub use client::{Ack, InstanceClient, InstanceError};
pub use process::{run_instance, InstanceArgs};
pub use proto::InstanceStatus;

/// Newline-delimited JSON event log inside the sandbox directory.
pub const EVENT_LOG: &str = "events.ndjson";
/// Pristine marker naming the app the sandbox was created for.
pub const APP_FILE: &str = "app.json";

/// Locates the `zc-instance` executable: `ZC_INSTANCE_BIN`, then next to the
/// running executable or one directory up (covers `target/*/examples` and
/// `target/*/deps`).
pub fn instance_program() -> Option<std::path::PathBuf> {
    if let Some(p) = std::env::var_os("ZC_INSTANCE_BIN") {
        return Some(p.into());
    }
    let exe = std::env::current_exe().ok()?;
    let name = format!("zc-instance{}", std::env::consts::EXE_SUFFIX);
    exe.ancestors()
        .skip(1)
        .take(2)
        .map(|d| d.join(&name))
        .find(|p| p.is_file())
}
