//! `zcgw`: run a deployment, measure lag and connection stability, or
//! print the cost comparison.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use uuid::Uuid;

use zc_core::cost::{series_csv, series_markdown, CostParams};
use zc_core::deploy::{read_credentials, DeployConfig, Deployment, CREDENTIALS_FILE};
use zc_core::metrics::{
    emit_report, run_connection_trials, run_lag_probe, ProbeOptions, Report, ReportFormat, TrialOptions,
};
use zc_core::session::{ConnectOptions, Credential, Hello, RelayRoute, SessionClient};

#[derive(Parser)]
#[command(name = "zcgw", version, about = "Remote chat-app sandbox gateway")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run orchestrator, session listener, relay and HTTP front from a config.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Half-RTT lag probe over a live session.
    Probe {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 10.0)]
        rate: f64,
        /// Seconds.
        #[arg(long, default_value_t = 60)]
        duration: u64,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
    },
    /// Sequential connect, hold and close trials.
    Soak {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 25)]
        attempts: u32,
        /// Seconds to hold each connection.
        #[arg(long, default_value_t = 20)]
        hold: u64,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
    },
    /// Cumulative cloud versus dedicated cost, month by month.
    Cost {
        #[arg(long)]
        apps: u32,
        #[arg(long)]
        months: u32,
        #[arg(long = "cloud-usd-gb")]
        cloud_usd_gb: f64,
        #[arg(long = "dedicated-extra-usd", default_value_t = 0.0)]
        dedicated_extra_usd: f64,
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Args)]
struct Target {
    /// Session listener address.
    #[arg(long)]
    server: Option<SocketAddr>,
    /// Relay to fall back on.
    #[arg(long)]
    relay: Option<SocketAddr>,
    /// Service name registered at the relay.
    #[arg(long, requires = "relay")]
    service: Option<String>,
    /// credentials.json written by `serve`.
    #[arg(long)]
    credentials: Option<PathBuf>,
    #[arg(long)]
    user: Option<String>,
    #[arg(long, requires = "user")]
    token: Option<String>,
    #[arg(long)]
    instance: Option<Uuid>,
    #[arg(long, default_value = "local")]
    network_label: String,
    #[arg(long, default_value = "zcgw")]
    client_label: String,
}

impl Target {
    fn hello(&self) -> Result<Hello, String> {
        if let (Some(user), Some(token), Some(instance)) = (&self.user, &self.token, self.instance) {
            let cred = Credential {
                username: user.clone(),
                token: token.clone(),
                expires_at_ms: 0,
            };
            return Ok(Hello::login(&cred, instance));
        }
        let path = self
            .credentials
            .clone()
            .ok_or_else(|| format!("give --credentials <{CREDENTIALS_FILE}> or --user, --token and --instance"))?;
        let all = read_credentials(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let pick = all
            .iter()
            .find(|c| {
                self.user.as_ref().is_none_or(|u| &c.username == u) && self.instance.is_none_or(|i| c.instance == i)
            })
            .ok_or_else(|| format!("no matching credential in {}", path.display()))?;
        Ok(Hello::login(&pick.credential(), pick.instance))
    }

    fn route(&self) -> Result<ConnectOptions, String> {
        let relay = match (self.relay, &self.service) {
            (Some(addr), Some(service)) => Some(RelayRoute {
                addr,
                service: service.clone(),
            }),
            (Some(_), None) => return Err("--relay needs --service".into()),
            _ => None,
        };
        if self.server.is_none() && relay.is_none() {
            return Err("give --server or --relay".into());
        }
        Ok(ConnectOptions {
            direct: self.server,
            relay,
            direct_timeout: None,
        })
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse().cmd).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("zcgw: {e}");
            ExitCode::FAILURE
        }
    }
}

async fn run(cmd: Cmd) -> Result<(), String> {
    match cmd {
        Cmd::Serve { config } => {
            let config = DeployConfig::from_file(&config).map_err(|e| e.to_string())?;
            let creds_path = config.data_dir.join(CREDENTIALS_FILE);
            let dep = Deployment::start(config).await.map_err(|e| e.to_string())?;
            eprintln!("session listener {}", dep.session_addr());
            if let Some(a) = dep.http_addr() {
                eprintln!("http listener    {a}");
            }
            if let Some(a) = dep.relay_addr() {
                eprintln!("relay listener   {a}");
            }
            eprintln!("credentials      {}", creds_path.display());
            shutdown_signal().await;
            dep.shutdown().await;
            Ok(())
        }
        Cmd::Probe {
            target,
            rate,
            duration,
            format,
        } => {
            let mut client = SessionClient::connect(&target.route()?, &target.hello()?)
                .await
                .map_err(|e| e.to_string())?;
            let opts = ProbeOptions {
                rate_hz: rate,
                duration: Duration::from_secs(duration),
                network_label: target.network_label.clone(),
                client_label: target.client_label.clone(),
                ..ProbeOptions::default()
            };
            let report = run_lag_probe(&mut client, &opts).await.map_err(|e| e.code().to_string())?;
            client.close().await;
            print!("{}", emit_report(&Report::Lag(vec![report]), format));
            Ok(())
        }
        Cmd::Soak {
            target,
            attempts,
            hold,
            format,
        } => {
            let route = target.route()?;
            let hello = target.hello()?;
            let opts = TrialOptions {
                hold: Duration::from_secs(hold),
                network_label: target.network_label.clone(),
                client_label: target.client_label.clone(),
                ..TrialOptions::default()
            };
            let report = run_connection_trials(attempts, || SessionClient::connect(&route, &hello), &opts).await;
            print!("{}", emit_report(&Report::Soak(vec![report]), format));
            Ok(())
        }
        Cmd::Cost {
            apps,
            months,
            cloud_usd_gb,
            dedicated_extra_usd,
            csv,
        } => {
            if apps == 0 {
                return Err("--apps must be at least 1".into());
            }
            let params = CostParams {
                horizon_months: months,
                ..CostParams::with_prices(cloud_usd_gb, dedicated_extra_usd)
            };
            params.validate().map_err(|e| e.to_string())?;
            let series = params.series(apps, months);
            if csv {
                print!("{}", series_csv(&series));
            } else {
                println!("{} app(s), {} GB RAM", apps, params.ram_required(apps));
                println!();
                print!("{}", series_markdown(&series));
                println!();
                match params.crossover_month(apps) {
                    Some(m) => println!("cumulative cloud cost reaches the dedicated cost at month {m}"),
                    None => println!("no crossover: cloud price is zero"),
                }
            }
            Ok(())
        }
    }
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("install SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = tokio::signal::ctrl_c().await;
}
