//! Markdown tables in the layout of the outcome and lag tables, plus CSV
//! with one row per sample or trial.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::lag::{LagReport, LagSample};
use super::trials::{ConnectionTrial, SoakReport, TrialOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    Lag(Vec<LagReport>),
    Soak(Vec<SoakReport>),
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
}

pub fn emit_report(report: &Report, format: ReportFormat) -> String {
    match (report, format) {
        (Report::Lag(r), ReportFormat::Markdown) => lag_markdown(r),
        (Report::Lag(r), ReportFormat::Csv) => lag_csv(r),
        (Report::Soak(r), ReportFormat::Markdown) => soak_markdown(r),
        (Report::Soak(r), ReportFormat::Csv) => soak_csv(r),
    }
}

fn distinct<'a>(labels: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for l in labels {
        if !out.contains(&l) {
            out.push(l);
        }
    }
    out
}

fn header(out: &mut String, leading: &[&str], networks: &[&str]) {
    let cols: Vec<&str> = leading.iter().chain(networks).copied().collect();
    let _ = writeln!(out, "| {} |", cols.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(cols.len()));
}

/// Outcome counts per client, one column per network.
pub fn soak_markdown(reports: &[SoakReport]) -> String {
    let networks = distinct(reports.iter().map(|r| r.network_label.as_str()));
    let mut out = String::new();
    header(&mut out, &["Client", "Connection Status"], &networks);
    let live: Vec<&SoakReport> = reports.iter().filter(|r| !r.trials.is_empty()).collect();
    for client in distinct(live.iter().map(|r| r.client_label.as_str())) {
        for outcome in TrialOutcome::ALL {
            let mut row = format!("| {client} | {} |", outcome.label());
            for net in &networks {
                let cell = live
                    .iter()
                    .find(|r| r.client_label == client && r.network_label == *net)
                    .map(|r| r.counts().get(outcome).to_string())
                    .unwrap_or_default();
                let _ = write!(row, " {cell} |");
            }
            out.push_str(&row);
            out.push('\n');
        }
    }
    out
}

/// Mean lag in seconds per client and network, closed by an overall average row.
pub fn lag_markdown(reports: &[LagReport]) -> String {
    let networks = distinct(reports.iter().map(|r| r.network_label.as_str()));
    let mut out = String::new();
    header(&mut out, &["Client Device"], &networks);
    let live: Vec<&LagReport> = reports
        .iter()
        .filter(|r| !r.samples.is_empty() || r.losses > 0)
        .collect();
    let mut cells = Vec::new();
    for client in distinct(live.iter().map(|r| r.client_label.as_str())) {
        let mut row = format!("| {client} |");
        for net in &networks {
            let mean = live
                .iter()
                .find(|r| r.client_label == client && r.network_label == *net)
                .map(|r| r.mean_lag_s);
            let cell = match mean {
                Some(Some(m)) => {
                    cells.push(m);
                    format!("{m:.3}")
                }
                Some(None) => "n/a".to_string(),
                None => String::new(),
            };
            let _ = write!(row, " {cell} |");
        }
        out.push_str(&row);
        out.push('\n');
    }
    if !live.is_empty() {
        let avg = if cells.is_empty() {
            "n/a".to_string()
        } else {
            format!("{:.3}", cells.iter().sum::<f64>() / cells.len() as f64)
        };
        let blanks = " |".repeat(networks.len().saturating_sub(1));
        let _ = writeln!(out, "| **Average Lag (s)** | {avg} |{blanks}");
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct LagRow {
    network: String,
    client: String,
    /// Empty for a lost probe.
    probe_id: Option<u32>,
    sent_at_ms: Option<u64>,
    rtt_ms: Option<f64>,
    lag_ms: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrialRow {
    network: String,
    client: String,
    attempt_index: u32,
    outcome: TrialOutcome,
    duration_s: f64,
    frames: u64,
    inputs: u64,
    detail: Option<String>,
}

fn write_csv<T: Serialize>(header: &[&str], rows: impl Iterator<Item = T>) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).expect("write to memory");
    for row in rows {
        w.serialize(row).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

const LAG_HEADER: [&str; 6] = ["network", "client", "probe_id", "sent_at_ms", "rtt_ms", "lag_ms"];
const TRIAL_HEADER: [&str; 8] = [
    "network",
    "client",
    "attempt_index",
    "outcome",
    "duration_s",
    "frames",
    "inputs",
    "detail",
];

pub fn lag_csv(reports: &[LagReport]) -> String {
    let rows = reports.iter().flat_map(|r| {
        let samples = r.samples.iter().map(move |s| LagRow {
            network: r.network_label.clone(),
            client: r.client_label.clone(),
            probe_id: Some(s.probe_id),
            sent_at_ms: Some(s.sent_at_ms),
            rtt_ms: Some(s.rtt_ms),
            lag_ms: Some(s.lag_ms),
        });
        let lost = (0..r.losses).map(move |_| LagRow {
            network: r.network_label.clone(),
            client: r.client_label.clone(),
            probe_id: None,
            sent_at_ms: None,
            rtt_ms: None,
            lag_ms: None,
        });
        samples.chain(lost)
    });
    write_csv(&LAG_HEADER, rows)
}

pub fn soak_csv(reports: &[SoakReport]) -> String {
    let rows = reports.iter().flat_map(|r| {
        r.trials.iter().map(move |t| TrialRow {
            network: r.network_label.clone(),
            client: r.client_label.clone(),
            attempt_index: t.attempt_index,
            outcome: t.outcome,
            duration_s: t.duration_s,
            frames: t.frames,
            inputs: t.inputs,
            detail: t.detail.clone(),
        })
    });
    write_csv(&TRIAL_HEADER, rows)
}

/// Groups rows by (network, client) in order of first appearance.
fn group<T>(rows: Vec<T>, key: impl Fn(&T) -> (String, String)) -> Vec<((String, String), Vec<T>)> {
    let mut groups: Vec<((String, String), Vec<T>)> = Vec::new();
    for row in rows {
        let k = key(&row);
        match groups.iter_mut().find(|(g, _)| *g == k) {
            Some((_, v)) => v.push(row),
            None => groups.push((k, vec![row])),
        }
    }
    groups
}

fn read_rows<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, ReportError> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    rd.deserialize().map(|r| r.map_err(ReportError::from)).collect()
}

pub fn parse_lag_csv(text: &str) -> Result<Vec<LagReport>, ReportError> {
    let rows: Vec<LagRow> = read_rows(text)?;
    let mut out = Vec::new();
    for ((network, client), rows) in group(rows, |r| (r.network.clone(), r.client.clone())) {
        let mut samples = Vec::new();
        let mut losses = 0;
        for (i, row) in rows.into_iter().enumerate() {
            match (row.probe_id, row.sent_at_ms, row.rtt_ms) {
                (Some(id), Some(sent), Some(rtt)) => {
                    let s = LagSample::new(id, sent, rtt);
                    if row.lag_ms.is_some_and(|l| l != s.lag_ms) {
                        return Err(ReportError::Row {
                            row: i + 1,
                            msg: "lag_ms is not rtt_ms / 2".into(),
                        });
                    }
                    samples.push(s);
                }
                (None, None, None) => losses += 1,
                _ => {
                    return Err(ReportError::Row {
                        row: i + 1,
                        msg: "partial sample".into(),
                    })
                }
            }
        }
        out.push(LagReport::new(samples, losses, &network, &client));
    }
    Ok(out)
}

pub fn parse_soak_csv(text: &str) -> Result<Vec<SoakReport>, ReportError> {
    let rows: Vec<TrialRow> = read_rows(text)?;
    Ok(group(rows, |r| (r.network.clone(), r.client.clone()))
        .into_iter()
        .map(|((network_label, client_label), rows)| SoakReport {
            trials: rows
                .into_iter()
                .map(|r| ConnectionTrial {
                    attempt_index: r.attempt_index,
                    outcome: r.outcome,
                    duration_s: r.duration_s,
                    frames: r.frames,
                    inputs: r.inputs,
                    detail: r.detail,
                })
                .collect(),
            network_label,
            client_label,
        })
        .collect())
}
