//! Body of the `zc-instance` executable.
//!
//! One state thread owns the [`ChatState`] and the event log; connection
//! threads only parse requests and forward them through a channel, so all
//! mutations are serialised in arrival order.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::mpsc;

use crate::app::{self, ChatEvent, ChatState, IsolationAuditReport};
use crate::instance::proto::{self, InstanceStatus, Message, Request, Response};
use crate::instance::{confine, EVENT_LOG};

#[derive(Debug, Clone)]
pub struct InstanceArgs {
    pub app: String,
    pub dir: PathBuf,
    pub control: SocketAddr,
    pub secret: String,
}

struct Command {
    /// `None` asks for the welcome message sent after a successful hello.
    request: Option<Request>,
    reply: mpsc::Sender<Vec<u8>>,
}

struct Instance {
    state: ChatState,
    log_entries: u64,
    enforcement: String,
    exfil: Vec<TcpStream>,
    cached_frame: Option<(u64, Vec<u8>)>,
}

fn error(code: &str, message: impl Into<String>) -> Vec<u8> {
    proto::encode_json(&Response::Error {
        code: code.into(),
        message: message.into(),
    })
}

impl Instance {
    fn append(&mut self, ev: &ChatEvent) -> std::io::Result<()> {
        let mut line = serde_json::to_vec(ev).expect("event serialises");
        line.push(b'\n');
        let mut f = OpenOptions::new().create(true).append(true).open(EVENT_LOG)?;
        f.write_all(&line)?;
        self.log_entries += 1;
        Ok(())
    }

    fn status(&self) -> InstanceStatus {
        InstanceStatus {
            app: self.state.app.clone(),
            revision: self.state.revision,
            digest: hex::encode(self.state.digest()),
            compromised: self.state.compromised,
            conversations: self.state.conversations.len(),
            log_entries: self.log_entries,
            open_exfil: self.exfil.len(),
        }
    }

    fn handle(&mut self, req: Request) -> Vec<u8> {
        match req {
            Request::Hello { .. } => error("PROTOCOL", "already authenticated"),
            Request::Deliver { msg } => {
                let ev = ChatEvent::Message { msg };
                self.state.apply(&ev);
                if let Err(e) = self.append(&ev) {
                    return error("LOG_WRITE", e.to_string());
                }
                proto::encode_json(&Response::Ack {
                    revision: self.state.revision,
                    applied: true,
                    outbound: None,
                })
            }
            Request::Input { source, event } => {
                let ev = ChatEvent::Input { source, event };
                let outcome = self.state.apply(&ev);
                if outcome.applied {
                    if let Err(e) = self.append(&ev) {
                        return error("LOG_WRITE", e.to_string());
                    }
                }
                proto::encode_json(&Response::Ack {
                    revision: self.state.revision,
                    applied: outcome.applied,
                    outbound: outcome.outbound,
                })
            }
            Request::Render => {
                let rev = self.state.revision;
                match &self.cached_frame {
                    Some((r, bytes)) if *r == rev => bytes.clone(),
                    _ => {
                        let bytes = proto::encode_frame_message(rev, &app::render(&self.state));
                        self.cached_frame = Some((rev, bytes.clone()));
                        bytes
                    }
                }
            }
            Request::State => proto::encode_json(&Response::State(self.status())),
            Request::Probe { targets } => {
                match app::run_compromised_probe(&self.state, &targets) {
                    Ok((report, exfil)) => {
                        self.exfil.extend(exfil);
                        proto::encode_json(&Response::Probe {
                            report: IsolationAuditReport {
                                enforcement: self.enforcement.clone(),
                                ..report
                            },
                        })
                    }
                    Err(e) => error("NOT_COMPROMISED", e.to_string()),
                }
            }
        }
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

fn serve_connection(mut stream: TcpStream, secret: String, tx: mpsc::Sender<Command>) {
    stream.set_nodelay(true).ok();
    let hello = match proto::read_message_sync(&mut stream) {
        Ok(Some(Message::Json(body))) => serde_json::from_slice::<Request>(&body).ok(),
        _ => None,
    };
    let authed = matches!(&hello, Some(Request::Hello { secret: s }) if constant_time_eq(s.as_bytes(), secret.as_bytes()));
    if !authed {
        let _ = proto::write_sync(&mut stream, &error("AUTH_FAILED", "authentication failed"));
        return;
    }
    let (reply_tx, reply_rx) = mpsc::channel();
    if tx
        .send(Command {
            request: None,
            reply: reply_tx.clone(),
        })
        .is_err()
    {
        return;
    }
    let Ok(welcome) = reply_rx.recv() else { return };
    if proto::write_sync(&mut stream, &welcome).is_err() {
        return;
    }
    loop {
        let request = match proto::read_message_sync(&mut stream) {
            Ok(Some(Message::Json(body))) => match serde_json::from_slice::<Request>(&body) {
                Ok(r) => r,
                Err(e) => {
                    let _ = proto::write_sync(&mut stream, &error("BAD_REQUEST", e.to_string()));
                    continue;
                }
            },
            _ => return,
        };
        if tx
            .send(Command {
                request: Some(request),
                reply: reply_tx.clone(),
            })
            .is_err()
        {
            return;
        }
        let Ok(bytes) = reply_rx.recv() else { return };
        if proto::write_sync(&mut stream, &bytes).is_err() {
            return;
        }
    }
}

fn load_log(app: &str) -> (ChatState, u64) {
    let mut state = ChatState::new(app);
    let mut n = 0;
    if let Ok(f) = std::fs::File::open(EVENT_LOG) {
        for line in BufReader::new(f).lines().map_while(Result::ok) {
            if let Ok(ev) = serde_json::from_str::<ChatEvent>(&line) {
                state.apply(&ev);
                n += 1;
            }
        }
    }
    (state, n)
}

/// Runs the instance until its stdin closes (the orchestrator went away)
/// or it is killed.
pub fn run_instance(args: InstanceArgs) -> std::io::Result<()> {
    std::env::set_current_dir(&args.dir)?;
    let dir = std::env::current_dir()?;
    // Confine before any thread exists so every later thread inherits it.
    let enforcement = confine::confine_to(&dir);
    let (state, log_entries) = load_log(&args.app);
    let listener = TcpListener::bind(args.control)?;
    let addr = listener.local_addr()?;
    {
        let mut out = std::io::stdout().lock();
        writeln!(out, "READY {addr} {enforcement}")?;
        out.flush()?;
    }

    std::thread::spawn(|| {
        let mut sink = Vec::new();
        let _ = std::io::Read::read_to_end(&mut std::io::stdin(), &mut sink);
        std::process::exit(0);
    });

    let (tx, rx) = mpsc::channel::<Command>();
    std::thread::spawn(move || {
        let mut inst = Instance {
            state,
            log_entries,
            enforcement,
            exfil: Vec::new(),
            cached_frame: None,
        };
        for cmd in rx {
            let bytes = match cmd.request {
                Some(req) => inst.handle(req),
                None => proto::encode_json(&Response::Welcome {
                    app: inst.state.app.clone(),
                    revision: inst.state.revision,
                    enforcement: inst.enforcement.clone(),
                }),
            };
            let _ = cmd.reply.send(bytes);
        }
    });

    for stream in listener.incoming() {
        let Ok(stream) = stream else { continue };
        let tx = tx.clone();
        let secret = args.secret.clone();
        std::thread::spawn(move || serve_connection(stream, secret, tx));
    }
    Ok(())
}
