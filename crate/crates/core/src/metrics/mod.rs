//! Measurement harness: half-RTT lag probing, connection trials, a network
//! impairment shim and report emission.

mod lag;
mod report;
mod shim;
mod trials;

pub use lag::{run_lag_probe, LagError, LagReport, LagSample, ProbeOptions, DEFAULT_PROBE_TIMEOUT};
pub use report::{
    emit_report, lag_csv, lag_markdown, parse_lag_csv, parse_soak_csv, soak_csv, soak_markdown,
    Report, ReportError, ReportFormat,
};
pub use shim::{inject_network_delay, Impairment, ImpairmentShim};
pub use trials::{
    run_connection_trials, ConnectionTrial, OutcomeCounts, SoakReport, TrialOptions, TrialOutcome,
};
