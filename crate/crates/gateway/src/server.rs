//! WebSocket transport.
//!
//! Each connection gets a socket task (reads frames, writes the outbox,
//! sends pings) and a worker thread that owns the [`Connection`]. Policy
//! calls block, so they run on the worker; frames that arrive during a call
//! are applied before its reply is committed.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, RecvTimeoutError};
use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::Notify;
use tokio_tungstenite::tungstenite::Message;
use tracing::{debug, info, warn};

use crate::connection::{Connection, Flow};
use crate::host::SessionHost;
use crate::protocol::{HEARTBEAT_INTERVAL_MS, IDLE_TIMEOUT_MS};

pub const DEFAULT_BIND: &str = "127.0.0.1:8765";

/// How often the worker re-checks timers when nothing arrives.
const WORKER_POLL: Duration = Duration::from_millis(100);

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("accept failed: {0}")]
    Accept(std::io::Error),
    #[error("cannot start runtime: {0}")]
    Runtime(std::io::Error),
}

#[derive(Debug, Clone, Copy)]
pub struct Timing {
    pub heartbeat: Duration,
    pub idle_timeout: Duration,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            heartbeat: Duration::from_millis(HEARTBEAT_INTERVAL_MS),
            idle_timeout: Duration::from_millis(IDLE_TIMEOUT_MS),
        }
    }
}

pub struct GatewayServer {
    listener: TcpListener,
    host: Arc<SessionHost>,
    timing: Timing,
}

impl GatewayServer {
    pub async fn bind(addr: &str, host: Arc<SessionHost>) -> Result<Self, GatewayError> {
        let listener =
            TcpListener::bind(addr).await.map_err(|source| GatewayError::Bind { addr: addr.to_string(), source })?;
        Ok(Self { listener, host, timing: Timing::default() })
    }

    pub fn with_timing(mut self, timing: Timing) -> Self {
        self.timing = timing;
        self
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    /// Accepts connections until the task is dropped.
    pub async fn run(self) -> Result<(), GatewayError> {
        info!(addr = %self.local_addr(), "gateway listening");
        loop {
            let (stream, peer) = self.listener.accept().await.map_err(GatewayError::Accept)?;
            let host = self.host.clone();
            let timing = self.timing;
            tokio::spawn(async move {
                if let Err(e) = handle(stream, host, timing).await {
                    debug!(%peer, error = %e, "connection ended with error");
                }
            });
        }
    }
}

/// Binds and serves on a fresh runtime; blocks forever.
pub fn serve_blocking(addr: &str, host: Arc<SessionHost>) -> Result<(), GatewayError> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(GatewayError::Runtime)?;
    rt.block_on(async {
        let server = GatewayServer::bind(addr, host).await?;
        server.run().await
    })
}

enum Inbound {
    Text(String),
    Closed,
}

async fn handle(
    stream: TcpStream,
    host: Arc<SessionHost>,
    timing: Timing,
) -> Result<(), tokio_tungstenite::tungstenite::Error> {
    let ws = tokio_tungstenite::accept_async(stream).await?;
    let (mut write, mut read) = ws.split();
    let conn = Connection::new(host);
    let outbox = conn.outbox();
    let notify = Arc::new(Notify::new());
    let done = Arc::new(AtomicBool::new(false));
    let (tx, rx) = crossbeam_channel::unbounded();
    {
        let notify = notify.clone();
        let done = done.clone();
        std::thread::spawn(move || {
            work(conn, rx, &notify);
            done.store(true, Ordering::SeqCst);
            notify.notify_one();
        });
    }

    let mut heartbeat = tokio::time::interval(timing.heartbeat);
    heartbeat.tick().await;
    let mut last_seen = Instant::now();
    loop {
        tokio::select! {
            frame = read.next() => {
                last_seen = Instant::now();
                match frame {
                    Some(Ok(Message::Text(text))) => {
                        let _ = tx.send(Inbound::Text(text));
                    }
                    Some(Ok(Message::Close(_))) | None => {
                        let _ = tx.send(Inbound::Closed);
                        break;
                    }
                    Some(Ok(_)) => {}
                    Some(Err(e)) => {
                        let _ = tx.send(Inbound::Closed);
                        return Err(e);
                    }
                }
            }
            _ = notify.notified() => {
                let batch = outbox.lock().expect("outbox lock").drain();
                for msg in batch {
                    write.send(Message::Text(msg.to_text())).await?;
                }
                if done.load(Ordering::SeqCst) {
                    let _ = write.send(Message::Close(None)).await;
                    break;
                }
            }
            _ = heartbeat.tick() => {
                if last_seen.elapsed() > timing.idle_timeout {
                    warn!("client idle past timeout; disconnecting");
                    let _ = tx.send(Inbound::Closed);
                    let _ = write.send(Message::Close(None)).await;
                    break;
                }
                write.send(Message::Ping(Vec::new())).await?;
            }
        }
    }
    Ok(())
}

fn apply(conn: &mut Connection, batch: impl IntoIterator<Item = Inbound>) -> bool {
    for inbound in batch {
        match inbound {
            Inbound::Text(text) => {
                if conn.receive_text(&text) == Flow::Close {
                    return false;
                }
            }
            Inbound::Closed => {
                conn.disconnect();
                return false;
            }
        }
    }
    true
}

fn work(mut conn: Connection, rx: Receiver<Inbound>, notify: &Notify) {
    loop {
        let first = match rx.recv_timeout(WORKER_POLL) {
            Ok(m) => Some(m),
            Err(RecvTimeoutError::Timeout) => None,
            Err(RecvTimeoutError::Disconnected) => Some(Inbound::Closed),
        };
        let batch: Vec<Inbound> = first.into_iter().chain(rx.try_iter()).collect();
        if !apply(&mut conn, batch) {
            return;
        }
        conn.poll_timers();
        while conn.needs_proposal() {
            notify.notify_one();
            conn.fetch();
            let arrived: Vec<Inbound> = rx.try_iter().collect();
            if !apply(&mut conn, arrived) {
                return;
            }
            conn.commit();
            conn.poll_timers();
        }
        notify.notify_one();
    }
}
