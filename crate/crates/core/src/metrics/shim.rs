//! TCP proxy that delays every chunk in both directions.

use std::net::SocketAddr;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio::task::JoinSet;
use tokio::time::Instant;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Impairment {
    pub one_way_ms: f64,
    #[serde(default)]
    pub jitter_ms: f64,
}

impl Impairment {
    pub fn new(one_way_ms: f64, jitter_ms: f64) -> Self {
        Impairment {
            one_way_ms: one_way_ms.max(0.0),
            jitter_ms: jitter_ms.max(0.0),
        }
    }

    fn sample(&self) -> Duration {
        let j = if self.jitter_ms > 0.0 {
            rand::rng().random_range(-self.jitter_ms..=self.jitter_ms)
        } else {
            0.0
        };
        Duration::from_secs_f64((self.one_way_ms + j).max(0.0) / 1000.0)
    }
}

pub struct ImpairmentShim {
    addr: SocketAddr,
    impairment: Arc<RwLock<Impairment>>,
    task: tokio::task::JoinHandle<()>,
}

impl ImpairmentShim {
    /// Listens on `listen` and forwards each accepted connection to `upstream`.
    pub async fn start(listen: SocketAddr, upstream: SocketAddr, imp: Impairment) -> std::io::Result<Self> {
        let listener = TcpListener::bind(listen).await?;
        let addr = listener.local_addr()?;
        let impairment = Arc::new(RwLock::new(imp));
        let shared = impairment.clone();
        let task = tokio::spawn(async move {
            let mut conns = JoinSet::new();
            loop {
                let Ok((down, _)) = listener.accept().await else { break };
                let shared = shared.clone();
                conns.spawn(async move {
                    let up = match TcpStream::connect(upstream).await {
                        Ok(s) => s,
                        Err(e) => {
                            tracing::debug!("shim upstream connect failed: {e}");
                            return;
                        }
                    };
                    down.set_nodelay(true).ok();
                    up.set_nodelay(true).ok();
                    let (dr, dw) = down.into_split();
                    let (ur, uw) = up.into_split();
                    tokio::join!(pump(dr, uw, shared.clone()), pump(ur, dw, shared));
                });
                while conns.try_join_next().is_some() {}
            }
        });
        Ok(ImpairmentShim { addr, impairment, task })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn impairment(&self) -> Impairment {
        *self.impairment.read().expect("impairment lock")
    }

    pub fn set_impairment(&self, imp: Impairment) {
        *self.impairment.write().expect("impairment lock") = imp;
    }
}

impl Drop for ImpairmentShim {
    fn drop(&mut self) {
        self.task.abort();
    }
}

/// Changes the delay applied to chunks read from now on.
pub fn inject_network_delay(shim: &ImpairmentShim, one_way_ms: f64, jitter_ms: f64) {
    shim.set_impairment(Impairment::new(one_way_ms, jitter_ms));
}

async fn pump<R, W>(mut rd: R, mut wr: W, imp: Arc<RwLock<Impairment>>)
where
    R: AsyncReadExt + Unpin,
    W: AsyncWriteExt + Unpin + Send + 'static,
{
    let (tx, mut rx) = mpsc::unbounded_channel::<(Instant, Vec<u8>)>();
    let writer = tokio::spawn(async move {
        while let Some((at, chunk)) = rx.recv().await {
            tokio::time::sleep_until(at).await;
            if wr.write_all(&chunk).await.is_err() {
                return;
            }
        }
        let _ = wr.shutdown().await;
    });
    let mut last = Instant::now();
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        let n = match rd.read(&mut buf).await {
            Ok(0) | Err(_) => break,
            Ok(n) => n,
        };
        let delay = imp.read().expect("impairment lock").sample();
        // never overtake an earlier chunk
        let at = (Instant::now() + delay).max(last);
        last = at;
        if tx.send((at, buf[..n].to_vec())).is_err() {
            break;
        }
    }
    drop(tx);
    let _ = writer.await;
}
