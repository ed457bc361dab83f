//! Acceptance run: one PASS/FAIL line per criterion on stdout, progress and
//! detail on stderr. Exits non-zero when any criterion fails.
//!
//! `ZC_SOAK_SECS` shortens the ten-minute soak for local iteration; the
//! line then says so.

use std::collections::HashSet;
use std::future::Future;
use std::io::Read as _;
use std::net::SocketAddr;
use std::pin::Pin;
use std::sync::{Arc, Mutex};
use std::task::{Context, Poll};
use std::time::{Duration, Instant};

use rand::distr::{Alphanumeric, SampleString};
use rand::{Rng, SeedableRng};
use sha2::{Digest, Sha256};
use tokio::io::{AsyncRead, AsyncWrite, ReadBuf};
use tokio::net::TcpStream;
use uuid::Uuid;

use zc_core::app::{ChatMessage, ProbeAction, ProbeOutcome, EXPLOIT_TRIGGER};
use zc_core::cost::{self, CostParams, Deployment as Where};
use zc_core::deploy::{DeployConfig, Deployment};
use zc_core::gateway::{
    sign, BoxFut, Disposition, Gateway, InboundWebhook, MessageSink, PolicyMode, Policies, SenderPolicy, SinkError,
    SIGNATURE_HEADER,
};
use zc_core::metrics::{
    emit_report, run_connection_trials, run_lag_probe, Impairment, ImpairmentShim, ProbeOptions, Report,
    ReportFormat, TrialOptions,
};
use zc_core::orchestrator::LifecycleEvent;
use zc_core::session::{ClientEvent, Hello, SessionClient, Want};
use zc_core::wire::{
    decode_input, encode_input, encode_unit, read_unit, ChannelTag, Encoding, FrameDecoder, FrameEncoder,
    FramePacket, Framebuffer, InputEvent, InputKind, KeyframeMode, Orientation, ProbePacket, KEYFRAME_INTERVAL,
};

type Verdict = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn instance_program() -> std::path::PathBuf {
    env!("CARGO_BIN_EXE_zc-instance").into()
}

fn deploy_config(dir: &std::path::Path, apps: &[&str]) -> DeployConfig {
    let mut c = DeployConfig::minimal(dir.join("data"), apps);
    c.instance_program = Some(instance_program());
    c.http_listen = Some("127.0.0.1:0".parse().unwrap());
    c.webhook_secret = Some("acceptance-secret".into());
    c.default_policy = SenderPolicy::allow_all();
    for (i, ic) in c.instances.iter_mut().enumerate() {
        ic.binding = Some(format!("+1555010{i}"));
        ic.users = vec![format!("user{i}")];
    }
    c
}

async fn post_hook(http: &reqwest::Client, addr: SocketAddr, to: &str, body: &str) -> Result<u16, String> {
    let hook = InboundWebhook {
        message_id: Uuid::new_v4().to_string(),
        from: "+15559999".into(),
        to: to.into(),
        body: body.into(),
    };
    let raw = serde_json::to_vec(&hook).unwrap();
    let resp = http
        .post(format!("http://{addr}/webhook/sms"))
        .header(SIGNATURE_HEADER, sign(b"acceptance-secret", &raw))
        .body(raw)
        .send()
        .await
        .map_err(|e| e.to_string())?;
    Ok(resp.status().as_u16())
}

/// Records every byte read from the inner stream.
struct Tap<S> {
    inner: S,
    log: Arc<Mutex<Vec<u8>>>,
}

impl<S: AsyncRead + Unpin> AsyncRead for Tap<S> {
    fn poll_read(mut self: Pin<&mut Self>, cx: &mut Context<'_>, buf: &mut ReadBuf<'_>) -> Poll<std::io::Result<()>> {
        let before = buf.filled().len();
        let r = Pin::new(&mut self.inner).poll_read(cx, buf);
        if let Poll::Ready(Ok(())) = r {
            self.log.lock().unwrap().extend_from_slice(&buf.filled()[before..]);
        }
        r
    }
}

impl<S: AsyncWrite + Unpin> AsyncWrite for Tap<S> {
    fn poll_write(mut self: Pin<&mut Self>, cx: &mut Context<'_>, buf: &[u8]) -> Poll<std::io::Result<usize>> {
        Pin::new(&mut self.inner).poll_write(cx, buf)
    }
    fn poll_flush(mut self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<std::io::Result<()>> {
        Pin::new(&mut self.inner).poll_flush(cx)
    }
    fn poll_shutdown(mut self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<std::io::Result<()>> {
        Pin::new(&mut self.inner).poll_shutdown(cx)
    }
}

const SENTINEL_LEN: usize = 16;

/// Counts windows of `hay` that equal one of the sentinels. Sentinels are
/// alphanumeric, so only runs of 16+ alphanumeric bytes need hashing.
fn count_sentinels(hay: &[u8], set: &HashSet<[u8; SENTINEL_LEN]>) -> usize {
    let mut hits = 0;
    let mut run = 0;
    for (i, b) in hay.iter().enumerate() {
        if b.is_ascii_alphanumeric() {
            run += 1;
            if run >= SENTINEL_LEN {
                let w: [u8; SENTINEL_LEN] = hay[i + 1 - SENTINEL_LEN..=i].try_into().unwrap();
                hits += usize::from(set.contains(&w));
            }
        } else {
            run = 0;
        }
    }
    hits
}

async fn ac1_pixel_only_egress() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = deploy_config(dir.path(), &["sms"]);
    cfg.fps = 50;
    let dep = Deployment::start(cfg).await.map_err(|e| e.to_string())?;
    let cred = dep.credentials[0].clone();
    let http_addr = dep.http_addr().unwrap();

    let sentinels: Vec<String> = (0..1000)
        .map(|_| Alphanumeric.sample_string(&mut rand::rng(), SENTINEL_LEN))
        .collect();
    let set: Arc<HashSet<[u8; SENTINEL_LEN]>> =
        Arc::new(sentinels.iter().map(|s| s.as_bytes().try_into().unwrap()).collect());
    // the scanner finds what it should
    let control = format!("xx {} yy", sentinels[7]);
    check(count_sentinels(control.as_bytes(), &set) == 1, || "scanner self-check failed".into())?;

    let log = Arc::new(Mutex::new(Vec::new()));
    let tcp = TcpStream::connect(dep.session_addr()).await.map_err(|e| e.to_string())?;
    let tap = Tap { inner: tcp, log: log.clone() };
    let mut client = SessionClient::over(tap, &Hello::login(&cred.credential(), cred.instance))
        .await
        .map_err(|e| e.to_string())?;

    let (stop_tx, mut stop_rx) = tokio::sync::oneshot::channel::<()>();
    let scan_set = set.clone();
    let reader = tokio::spawn(async move {
        let (mut frames, mut hits, mut last) = (0usize, 0usize, None);
        loop {
            tokio::select! {
                _ = &mut stop_rx => break,
                ev = client.next_event() => match ev {
                    Some(ClientEvent::Frame { frame, .. }) => {
                        frames += 1;
                        if last.as_ref() != Some(&frame) {
                            hits += count_sentinels(frame.pixels(), &scan_set);
                        }
                        last = Some(frame);
                    }
                    Some(ClientEvent::Closed) | None => break,
                    _ => {}
                },
            }
        }
        (frames, hits)
    });

    let http = reqwest::Client::new();
    let mut delivered = 0;
    for (i, s) in sentinels.iter().enumerate() {
        if post_hook(&http, http_addr, "+15550100", &format!("note {i}: {s}")).await? == 200 {
            delivered += 1;
        }
    }
    tokio::time::sleep(Duration::from_millis(500)).await;
    let _ = stop_tx.send(());
    let (frames, frame_hits) = reader.await.map_err(|e| e.to_string())?;
    let raw = log.lock().unwrap().clone();
    let raw_hits = count_sentinels(&raw, &set);
    let rev = dep.orchestrator.status(cred.instance).await.map_err(|e| e.to_string())?.revision;
    dep.shutdown().await;

    check(delivered == 1000, || format!("only {delivered}/1000 webhooks delivered"))?;
    check(frames > 1, || format!("only {frames} frames seen"))?;
    check(raw_hits == 0 && frame_hits == 0, || {
        format!("sentinel found: {raw_hits} in raw stream, {frame_hits} in frames")
    })?;
    Ok(format!(
        "1000 sentinels, {} raw bytes and {frames} frames scanned, 0 hits (instance revision {rev})",
        raw.len()
    ))
}

fn sha256_file(p: &std::path::Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(p).unwrap_or_default()))
}

async fn ac2_isolation_audit() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let dep = Deployment::start(deploy_config(dir.path(), &["sms", "signal", "whatsapp"]))
        .await
        .map_err(|e| e.to_string())?;
    let orch = dep.orchestrator.clone();
    let ids = dep.instances.clone();
    let http = reqwest::Client::new();
    for (i, _) in ids.iter().enumerate().skip(1) {
        post_hook(&http, dep.http_addr().unwrap(), &format!("+1555010{i}"), "sibling secret").await?;
    }
    let logs: Vec<_> = ids[1..]
        .iter()
        .map(|id| orch.handle(*id).unwrap().spec.sandbox_dir.join("events.ndjson"))
        .collect();
    let before: Vec<String> = logs.iter().map(|p| sha256_file(p)).collect();

    let status = post_hook(&http, dep.http_addr().unwrap(), "+15550100", &format!("{EXPLOIT_TRIGGER}payload")).await?;
    check(status == 200, || format!("exploit webhook returned {status}"))?;
    check(orch.status(ids[0]).await.map_err(|e| e.to_string())?.compromised, || {
        "instance 0 not compromised".into()
    })?;
    let attacker = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let report = orch
        .audit_isolation(ids[0], Some(attacker.local_addr().unwrap()))
        .await
        .map_err(|e| e.to_string())?;
    let after: Vec<String> = logs.iter().map(|p| sha256_file(p)).collect();
    dep.shutdown().await;

    check(report.confinement_held(), || format!("confinement broken: {:?}", report.records))?;
    check(report.siblings_unchanged(), || "sibling sandbox digest changed".into())?;
    check(before == after, || "sibling event log changed".into())?;
    let reads = report.outcomes(ProbeAction::ReadSiblingDir).count();
    let conns = report.outcomes(ProbeAction::ConnectSiblingControl).count();
    check(reads == 2 && conns == 2, || format!("expected 2 sibling probes each, got {reads}/{conns}"))?;
    let escapes = report.outcomes(ProbeAction::EscapeWrite).filter(|r| r.outcome == ProbeOutcome::Denied).count();
    Ok(format!(
        "read sibling x{reads}, connect sibling x{conns}, escape write x{escapes} all denied; enforcement {}",
        report.enforcement
    ))
}

async fn ac3_reset_soundness() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = deploy_config(dir.path(), &["sms", "signal"]);
    cfg.instances[0].reset_period_ms = Some(2000);
    cfg.scheduler_tick_ms = 100;
    let dep = Deployment::start(cfg).await.map_err(|e| e.to_string())?;
    let orch = dep.orchestrator.clone();
    let id = dep.instances[0];
    let mut events = orch.subscribe();
    let started = Instant::now();

    orch.deliver(id, ChatMessage::inbound("+1", format!("{EXPLOIT_TRIGGER}x"), 1))
        .await
        .map_err(|e| e.to_string())?;
    let attacker = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let report = orch
        .audit_isolation(id, Some(attacker.local_addr().unwrap()))
        .await
        .map_err(|e| e.to_string())?;
    let exfil_open = report.outcomes(ProbeAction::Exfiltrate).any(|r| r.outcome == ProbeOutcome::Allowed);
    check(exfil_open, || "exfil connection was not opened".into())?;
    let scheduled = orch.handle(id).map_err(|e| e.to_string())?.next_reset_at_ms;
    let (mut conn, _) = attacker.accept().map_err(|e| e.to_string())?;
    let closed_at = std::thread::spawn(move || {
        conn.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
        let mut sink = Vec::new();
        let _ = conn.read_to_end(&mut sink);
        zc_core::orchestrator::now_ms()
    });

    let snapshot = orch.handle(id).map_err(|e| e.to_string())?.snapshot.digest;
    let mut cycles = 0;
    let mut mismatches = Vec::new();
    let deadline = tokio::time::Instant::now() + Duration::from_secs(10).saturating_sub(started.elapsed());
    loop {
        let ev = tokio::time::timeout_at(deadline, events.recv()).await;
        match ev {
            Err(_) => break,
            Ok(Ok((iid, LifecycleEvent::Reset { .. }))) if iid == id => {
                cycles += 1;
                let now = orch.sandbox_digest(id).map_err(|e| e.to_string())?;
                if now != snapshot {
                    mismatches.push(cycles);
                }
            }
            Ok(Ok(_)) => {}
            Ok(Err(e)) => return Err(format!("event stream: {e}")),
        }
    }
    let history = orch.reset_history(id).map_err(|e| e.to_string())?;
    let closed = closed_at.join().map_err(|_| "reader thread panicked".to_string())?;
    dep.shutdown().await;

    let dwell_ms = closed as i64 - scheduled as i64;
    check(cycles >= 4, || format!("only {cycles} reset cycles in 10 s"))?;
    check(mismatches.is_empty(), || format!("digest mismatch after cycles {mismatches:?}"))?;
    check(history.iter().all(|r| r.matched && r.digest_after == snapshot), || {
        "reset history records a mismatch".into()
    })?;
    check(dwell_ms <= 2100, || format!("exfil socket closed {dwell_ms} ms after the scheduled reset"))?;
    Ok(format!(
        "{cycles} cycles in 10 s, every digest == snapshot; exfil closed {dwell_ms} ms after scheduled reset"
    ))
}

async fn ac4_connection_trials(soak: Duration) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let dep = Deployment::start(deploy_config(dir.path(), &["signal"])).await.map_err(|e| e.to_string())?;
    let cred = dep.credentials[0].clone();
    let hello = Hello::login(&cred.credential(), cred.instance);
    let addr = dep.session_addr();
    let opts = TrialOptions {
        hold: Duration::from_secs(2),
        input_interval: Some(Duration::from_secs(1)),
        network_label: "loopback".into(),
        client_label: "headless".into(),
        ..TrialOptions::default()
    };
    let trials = run_connection_trials(25, || SessionClient::connect_direct(addr, &hello), &opts).await;
    eprintln!("{}", emit_report(&Report::Soak(vec![trials.clone()]), ReportFormat::Markdown));
    let soak_opts = TrialOptions {
        hold: soak,
        retries: 0,
        ..opts
    };
    let long = run_connection_trials(1, || SessionClient::connect_direct(addr, &hello), &soak_opts).await;
    dep.shutdown().await;

    let c = trials.counts();
    check((c.successful, c.failed, c.retried, c.terminated) == (25, 0, 0, 0), || {
        format!("trials {}/{}/{}/{}", c.successful, c.failed, c.retried, c.terminated)
    })?;
    let t = &long.trials[0];
    check(long.counts().successful == 1, || format!("soak ended {:?}: {:?}", t.outcome, t.detail))?;
    let shortened = if soak < Duration::from_secs(600) { " (shortened by ZC_SOAK_SECS)" } else { "" };
    Ok(format!(
        "25/0/0/0; {:.0} s soak at 10 fps, {} frames, {} inputs, 0 terminations{shortened}",
        t.duration_s, t.frames, t.inputs
    ))
}

async fn ac5_lag_estimator() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let dep = Deployment::start(deploy_config(dir.path(), &["sms"])).await.map_err(|e| e.to_string())?;
    let cred = dep.credentials[0].clone();
    let hello = Hello::login(&cred.credential(), cred.instance).with_want(&[Want::Control]);
    let shim = ImpairmentShim::start("127.0.0.1:0".parse().unwrap(), dep.session_addr(), Impairment::default())
        .await
        .map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for d in [50.0, 100.0, 245.0] {
        shim.set_impairment(Impairment::new(d, 0.0));
        let mut c = SessionClient::connect_direct(shim.addr(), &hello).await.map_err(|e| e.to_string())?;
        let opts = ProbeOptions::default()
            .with_duration(Duration::from_millis(10_500))
            .with_labels(&format!("d={d}ms"), "headless");
        let r = run_lag_probe(&mut c, &opts).await.map_err(|e| e.code().to_string())?;
        c.close().await;
        let mean = r.mean_lag_ms().unwrap_or(f64::NAN);
        if r.samples.len() < 100 || mean.is_nan() || (mean - d).abs() > 0.10 * d + 5.0 {
            failures.push(format!("d={d}: {} samples, mean {mean:.1} ms", r.samples.len()));
        }
        reports.push(r);
    }
    dep.shutdown().await;
    eprintln!("{}", emit_report(&Report::Lag(reports.clone()), ReportFormat::Markdown));
    check(failures.is_empty(), || failures.join("; "))?;
    let means: Vec<String> = reports
        .iter()
        .map(|r| format!("{}: {:.1} ms over {}", r.network_label, r.mean_lag_ms().unwrap(), r.samples.len()))
        .collect();
    Ok(means.join(", "))
}

struct Recorder {
    routes: Vec<(String, Uuid)>,
    got: Mutex<Vec<(Uuid, ChatMessage)>>,
}

impl MessageSink for Recorder {
    fn route(&self, to: &str) -> Option<Uuid> {
        self.routes.iter().find(|(n, _)| n == to).map(|(_, id)| *id)
    }
    fn deliver(&self, instance: Uuid, msg: ChatMessage) -> BoxFut<'_, Result<(), SinkError>> {
        self.got.lock().unwrap().push((instance, msg));
        Box::pin(async { Ok(()) })
    }
}

async fn ac6_message_policy() -> Verdict {
    use proptest::prelude::*;
    use proptest::strategy::ValueTree;
    use proptest::test_runner::{Config, TestRunner};

    let numbers = prop::sample::select((0..6).map(|i| format!("+1555020{i}")).collect::<Vec<_>>());
    let policy = (
        any::<bool>(),
        prop::collection::btree_set(numbers.clone(), 0..4),
        any::<bool>(),
    )
        .prop_map(|(all, allowed, strip)| SenderPolicy {
            mode: if all { PolicyMode::AllowAll } else { PolicyMode::Allowlist },
            allowed,
            strip_link_previews: strip,
        });
    let body = prop_oneof![
        "[a-z ]{0,40}",
        "[a-z ]{0,10}(http|HTTPS|https)://[a-z]{1,8}\\.example/[a-z]{0,6}",
        "[ -~]{1500,1700}",
    ];
    let case = (policy, numbers, body);
    let mut runner = TestRunner::new(Config::with_cases(500));
    let cases: Vec<_> = (0..500).map(|_| case.new_tree(&mut runner).unwrap().current()).collect();

    let dir = tempfile::tempdir().unwrap();
    let instance = Uuid::new_v4();
    let sink = Arc::new(Recorder {
        routes: vec![("+15550300".into(), instance)],
        got: Mutex::new(Vec::new()),
    });
    let gw = Gateway::new(b"k".to_vec(), sink.clone(), Policies::default(), dir.path().join("q.ndjson"));
    let (mut delivered, mut with_url) = (0, 0);
    for (i, (policy, from, body)) in cases.into_iter().enumerate() {
        gw.set_policy(instance, policy.clone());
        let hook = InboundWebhook {
            message_id: format!("m{i}"),
            from: from.clone(),
            to: "+15550300".into(),
            body: body.clone(),
        };
        let raw = serde_json::to_vec(&hook).unwrap();
        let d = gw.handle_inbound(&raw, Some(&sign(b"k", &raw))).await.map_err(|e| e.to_string())?;
        let allowed = policy.mode == PolicyMode::AllowAll || policy.allowed.contains(&from);
        let lower = body.to_ascii_lowercase();
        let has_url = lower.contains("http://") || lower.contains("https://");
        if let Disposition::Delivered { no_preview, .. } = d {
            delivered += 1;
            check(allowed, || format!("case {i}: delivered from non-allowed sender {from}"))?;
            if has_url && policy.strip_link_previews {
                with_url += 1;
                check(no_preview, || format!("case {i}: URL delivered without no_preview"))?;
                let got = sink.got.lock().unwrap();
                check(got.last().is_some_and(|(_, m)| m.no_preview), || {
                    format!("case {i}: instance got a previewable URL")
                })?;
            }
        }
    }
    let sunk = sink.got.lock().unwrap().len();
    check(sunk == delivered, || format!("{sunk} reached the instance, {delivered} reported delivered"))?;
    Ok(format!("500 pairs, {delivered} delivered (all allowed), {with_url} URL-bearing all no_preview"))
}

async fn ac7_cost_model() -> Verdict {
    for (n, want) in [(1, 8.0), (3, 16.0), (7, 32.0), (15, 64.0)] {
        let got = cost::ram_required(n);
        check(got == want, || format!("ram_required({n}) = {got}, want {want}"))?;
    }
    // independent tier oracle: powers of two from 8 upward
    for n in 1..=200u32 {
        let need = 4 * n + 4;
        let tier = need.next_power_of_two() as f64;
        check(cost::ram_required(n) == tier, || format!("ram_required({n}) != {tier}"))?;
    }
    check(cost::DEDICATED_BASE_USD == 780.0, || "dedicated base is not $780".into())?;
    let mut last: Option<u64> = None;
    let mut price = 0.01;
    let mut steps = 0;
    while price <= 200.0 {
        for n in [1, 3, 7, 15] {
            let p = CostParams::with_prices(price, 12.5);
            let m = cost::crossover_month(n, &p).ok_or_else(|| format!("no crossover at ${price}"))?;
            let dedicated = cost::cumulative_cost(Where::Dedicated, n, 0, &p);
            check(
                cost::cumulative_cost(Where::Cloud, n, m as u32, &p) >= dedicated
                    && (m == 0 || cost::cumulative_cost(Where::Cloud, n, m as u32 - 1, &p) < dedicated),
                || format!("crossover {m} not minimal at n={n}, ${price}"),
            )?;
        }
        let m1 = cost::crossover_month(1, &CostParams::with_prices(price, 12.5)).unwrap();
        check(last.is_none_or(|l| m1 <= l), || format!("crossover rose at ${price}"))?;
        last = Some(m1);
        price *= 1.1;
        steps += 1;
    }
    check(cost::crossover_month(1, &CostParams::with_prices(0.0, 1.0)).is_none(), || {
        "zero price has a crossover".into()
    })?;
    Ok(format!("ladder 8/16/32/64, base $780, crossover finite and non-increasing over {steps} prices"))
}

fn random_frame(rng: &mut impl Rng, w: u16, h: u16) -> Framebuffer {
    let pixels = (0..Framebuffer::byte_len(w, h)).map(|_| rng.random()).collect();
    Framebuffer::new(w, h, Orientation::Portrait, pixels).unwrap()
}

fn mutate(rng: &mut impl Rng, f: &Framebuffer) -> Framebuffer {
    let mut next = f.clone();
    let px = next.pixels_mut();
    for _ in 0..rng.random_range(0..8) {
        let i = rng.random_range(0..px.len());
        px[i] = rng.random();
    }
    next
}

async fn unit_round_trip(tag: ChannelTag, payload: &[u8]) -> Result<(), String> {
    let unit = encode_unit(tag, payload).map_err(|e| e.to_string())?;
    let mut rd = &unit[..];
    match read_unit(&mut rd).await {
        Ok(Some((t, p))) if t == tag && p == payload => Ok(()),
        other => Err(format!("mux unit mismatch: {other:?}")),
    }
}

async fn ac8_protocol_round_trips() -> Verdict {
    let seed: u64 = rand::random();
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut packets = 0usize;
    let mut boundaries = 0usize;
    let mut deltas = 0usize;

    // 200 delta chains of 30, each straddling a keyframe slot
    for _ in 0..200 {
        let (w, h) = (rng.random_range(1..48u16), rng.random_range(1..48u16));
        let slot = rng.random_range(1..1000u32) * KEYFRAME_INTERVAL;
        let start = slot - rng.random_range(1..KEYFRAME_INTERVAL);
        let mut enc = FrameEncoder::resume_at(start, KeyframeMode::Raw);
        let mut dec = FrameDecoder::new();
        let mut frame = random_frame(&mut rng, w, h);
        for _ in 0..30 {
            let pkt = enc.encode(&frame).map_err(|e| e.to_string())?;
            let bytes = pkt.to_bytes().map_err(|e| e.to_string())?;
            let back = FramePacket::from_bytes(&bytes).map_err(|e| format!("seed {seed}: {e}"))?;
            check(back == pkt && back.to_bytes().unwrap() == bytes, || format!("seed {seed}: frame header"))?;
            if pkt.frame_id % KEYFRAME_INTERVAL == 0 {
                boundaries += 1;
                check(pkt.is_keyframe(), || format!("seed {seed}: slot {} not a keyframe", pkt.frame_id))?;
            }
            deltas += usize::from(pkt.encoding == Encoding::DeltaXorRle);
            let got = dec.decode(&back).map_err(|e| format!("seed {seed}: {e}"))?;
            check(*got == frame, || format!("seed {seed}: frame {} differs", pkt.frame_id))?;
            unit_round_trip(ChannelTag::Frames, &bytes).await?;
            packets += 1;
            frame = mutate(&mut rng, &frame);
        }
    }
    // PNG keyframes
    for _ in 0..50 {
        let (w, h) = (rng.random_range(1..40), rng.random_range(1..40));
        let f = random_frame(&mut rng, w, h);
        let pkt = FrameEncoder::new(KeyframeMode::Png).encode(&f).map_err(|e| e.to_string())?;
        let back = FramePacket::from_bytes(&pkt.to_bytes().unwrap()).map_err(|e| e.to_string())?;
        check(*FrameDecoder::new().decode(&back).map_err(|e| e.to_string())? == f, || {
            format!("seed {seed}: png frame differs")
        })?;
        packets += 1;
    }
    while packets < 10_000 {
        if rng.random_bool(0.5) {
            let kind = match rng.random_range(0..4) {
                0 => InputKind::Key {
                    keycode: rng.random(),
                    pressed: rng.random(),
                },
                1 => {
                    let n = rng.random_range(0..64);
                    InputKind::Text {
                        text: (0..n).map(|_| rng.random::<char>()).collect(),
                    }
                }
                2 => InputKind::Tap {
                    x: rng.random(),
                    y: rng.random(),
                },
                _ => InputKind::Swipe {
                    x1: rng.random(),
                    y1: rng.random(),
                    x2: rng.random(),
                    y2: rng.random(),
                    duration_ms: rng.random(),
                },
            };
            let ev = InputEvent {
                seq: rng.random(),
                client_time_ms: rng.random(),
                kind,
            };
            let bytes = encode_input(&ev).map_err(|e| e.to_string())?;
            let back = decode_input(&bytes).map_err(|e| format!("seed {seed}: {e}"))?;
            check(back == ev && encode_input(&back).unwrap() == bytes, || format!("seed {seed}: {ev:?}"))?;
            unit_round_trip(ChannelTag::Input, &bytes).await?;
        } else {
            let p = ProbePacket::probe(rng.random(), rng.random());
            let p = if rng.random() { p.ack() } else { p };
            let bytes = p.to_bytes();
            let back = ProbePacket::from_bytes(&bytes).map_err(|e| e.to_string())?;
            check(back == p && back.to_bytes() == bytes, || format!("seed {seed}: {p:?}"))?;
            unit_round_trip(ChannelTag::Control, &bytes).await?;
        }
        packets += 1;
    }
    Ok(format!(
        "{packets} packets byte-exact (seed {seed}); 200 chains of 30, {boundaries} keyframe boundaries, {deltas} deltas"
    ))
}

type Job = Pin<Box<dyn Future<Output = Verdict> + Send>>;

async fn run(name: &'static str, limit: Duration, job: Job) -> Verdict {
    let started = Instant::now();
    let r = match tokio::time::timeout(limit, tokio::spawn(job)).await {
        Err(_) => Err(format!("timed out after {limit:?}")),
        Ok(Err(e)) => Err(format!("panicked: {e}")),
        Ok(Ok(v)) => v,
    };
    eprintln!("[{name}] finished in {:.1} s", started.elapsed().as_secs_f64());
    r
}

fn main() {
    let soak = std::env::var("ZC_SOAK_SECS")
        .ok()
        .and_then(|s| s.parse().ok())
        .map(Duration::from_secs)
        .unwrap_or(Duration::from_secs(600));
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let results = rt.block_on(async move {
        // the soak runs alongside the rest
        let ac4 = tokio::spawn(run("AC4", soak + Duration::from_secs(300), Box::pin(ac4_connection_trials(soak))));
        let mut out = vec![
            ("1", "pixel-only egress", run("AC1", Duration::from_secs(300), Box::pin(ac1_pixel_only_egress())).await),
            ("2", "isolation audit", run("AC2", Duration::from_secs(60), Box::pin(ac2_isolation_audit())).await),
            ("3", "reset soundness and dwell bound", run("AC3", Duration::from_secs(90), Box::pin(ac3_reset_soundness())).await),
        ];
        let ac5 = run("AC5", Duration::from_secs(180), Box::pin(ac5_lag_estimator())).await;
        let ac6 = run("AC6", Duration::from_secs(60), Box::pin(ac6_message_policy())).await;
        let ac7 = run("AC7", Duration::from_secs(30), Box::pin(ac7_cost_model())).await;
        let ac8 = run("AC8", Duration::from_secs(180), Box::pin(ac8_protocol_round_trips())).await;
        let ac4 = ac4.await.unwrap_or_else(|e| Err(e.to_string()));
        out.push(("4", "connection trials and soak", ac4));
        out.push(("5", "lag estimator", ac5));
        out.push(("6", "message policy", ac6));
        out.push(("7", "cost model", ac7));
        out.push(("8", "protocol round-trips", ac8));
        out.sort_by_key(|(n, _, _)| *n);
        out
    });
    let mut failed = 0;
    for (n, name, r) in &results {
        match r {
            Ok(detail) => println!("AC{n} PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("AC{n} FAIL {name}: {why}");
            }
        }
    }
    rt.shutdown_timeout(Duration::from_secs(5));
    if failed > 0 {
        std::process::exit(1);
    }
}
