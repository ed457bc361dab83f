//! Sandboxed chat-app instance. Launched by the orchestrator, one per app.

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Parser;
use zc_core::instance::{run_instance, InstanceArgs};

#[derive(Parser)]
#[command(name = "zc-instance", about = "Run one sandboxed chat-app instance")]
struct Cli {
    /// App to run (whatsapp, signal, sms).
    #[arg(long)]
    app: String,
    /// Sandbox directory; the process is confined to it.
    #[arg(long)]
    dir: PathBuf,
    /// Control endpoint to listen on (port 0 picks one; printed on stdout).
    #[arg(long)]
    control: SocketAddr,
    /// Per-instance secret required by the control endpoint.
    #[arg(long)]
    session: String,
}

fn main() {
    let cli = Cli::parse();
    let args = InstanceArgs {
        app: cli.app,
        dir: cli.dir,
        control: cli.control,
        secret: cli.session,
    };
    if let Err(e) = run_instance(args) {
        eprintln!("zc-instance: {e}");
        std::process::exit(1);
    }
}
