//! The relay daemon: TCP and WebSocket listeners feeding one control loop.
//!
//! Each connection gets a reader thread that decodes NDJSON lines and pushes
//! them, in arrival order, onto a single queue. The control loop thread is the
//! only owner of the [`Session`]; it ingests queued messages, ticks the
//! session at the loop rate and fans the published lines out to every
//! connected client through per-client writer threads.

use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, SyncSender, TrySendError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, error, info, warn};
use telequest_core::protocol::{encode, StreamDecoder, WireMessage};
use telequest_core::{Session, SessionConfig, ValidationError};

use crate::http;

/// Where the control loop takes its notion of time from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClockMode {
    /// Real time: the loop ticks on a timer and messages are stamped on receipt.
    #[default]
    Wall,
    /// Replay: time advances to each message's `stamp`, running every grid
    /// tick in between. Output depends only on the message sequence.
    Virtual,
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub config: SessionConfig,
    pub clock: ClockMode,
    pub ui_dir: Option<PathBuf>,
    pub bind_host: String,
}

impl ServeOptions {
    pub fn new(config: SessionConfig) -> Self {
        Self {
            config,
            clock: ClockMode::Wall,
            ui_dir: None,
            bind_host: "0.0.0.0".into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ValidationError),
    #[error("cannot bind {what} listener on {addr}: {source}")]
    Bind {
        what: &'static str,
        addr: String,
        source: io::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

type ConnId = u64;
type Line = Arc<str>;

/// Lines buffered per client before new lines are dropped for that client.
const CLIENT_BUFFER: usize = 8192;
const POLL: Duration = Duration::from_millis(20);

enum Inbound {
    Opened { conn: ConnId, writer: SyncSender<Line> },
    Message { conn: ConnId, msg: WireMessage, received_at: f64 },
    Closed { conn: ConnId },
}

/// Handle to a running daemon. Dropping it stops the daemon.
pub struct Daemon {
    tcp_addr: SocketAddr,
    ws_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl Daemon {
    pub fn tcp_addr(&self) -> SocketAddr {
        self.tcp_addr
    }

    pub fn ws_addr(&self) -> SocketAddr {
        self.ws_addr
    }

    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    /// Blocks until the daemon stops.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for Daemon {
    fn drop(&mut self) {
        self.stop();
    }
}

fn bind(what: &'static str, host: &str, port: u16) -> Result<TcpListener, ServeError> {
    let addr = format!("{host}:{port}");
    let listener = TcpListener::bind(&addr).map_err(|source| ServeError::Bind {
        what,
        addr: addr.clone(),
        source,
    })?;
    listener.set_nonblocking(true)?;
    Ok(listener)
}

/// Binds both listeners and starts the daemon threads.
pub fn spawn(opts: ServeOptions) -> Result<Daemon, ServeError> {
    let session = Session::new(opts.config.clone())?;
    let tcp = bind("tcp", &opts.bind_host, opts.config.tcp_port)?;
    let ws = bind("websocket", &opts.bind_host, opts.config.ws_port)?;
    let (tcp_addr, ws_addr) = (tcp.local_addr()?, ws.local_addr()?);
    info!(
        "event=listen tcp={tcp_addr} ws={ws_addr} mode={} clock={:?}",
        opts.config.mode, opts.clock
    );

    let stop = Arc::new(AtomicBool::new(false));
    let ids = Arc::new(AtomicU64::new(0));
    let start = Instant::now();
    let (tx, rx) = mpsc::channel();

    let mut threads = Vec::new();
    {
        let (stop, clock) = (stop.clone(), opts.clock);
        threads.push(
            thread::Builder::new()
                .name("control-loop".into())
                .spawn(move || control_loop(session, rx, clock, start, stop))?,
        );
    }
    {
        let (stop, ids, tx) = (stop.clone(), ids.clone(), tx.clone());
        threads.push(thread::Builder::new().name("tcp-accept".into()).spawn(move || {
            accept_loop(tcp, &stop, |stream| {
                let conn = ids.fetch_add(1, Ordering::SeqCst);
                if let Err(e) = start_tcp_client(conn, stream, tx.clone(), start) {
                    warn!("tcp client {conn} setup failed: {e}");
                }
            })
        })?);
    }
    {
        let (stop2, ui_dir) = (stop.clone(), opts.ui_dir.clone());
        threads.push(thread::Builder::new().name("ws-accept".into()).spawn(move || {
            accept_loop(ws, &stop2, |stream| {
                let conn = ids.fetch_add(1, Ordering::SeqCst);
                let (tx, ui_dir, stop) = (tx.clone(), ui_dir.clone(), stop2.clone());
                let spawned = thread::Builder::new()
                    .name(format!("ws-{conn}"))
                    .spawn(move || ws_client(conn, stream, tx, ui_dir, start, stop));
                if let Err(e) = spawned {
                    warn!("websocket client {conn} thread failed: {e}");
                }
            })
        })?);
    }

    Ok(Daemon {
        tcp_addr,
        ws_addr,
        stop,
        threads,
    })
}

fn accept_loop(listener: TcpListener, stop: &AtomicBool, mut on_client: impl FnMut(TcpStream)) {
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                debug!("accepted {peer}");
                if stream.set_nonblocking(false).is_ok() {
                    on_client(stream);
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL / 4),
            Err(e) => {
                error!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
    }
}

fn start_tcp_client(
    conn: ConnId,
    stream: TcpStream,
    tx: Sender<Inbound>,
    start: Instant,
) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let peer = stream.peer_addr()?;
    info!("event=client_open conn={conn} transport=tcp peer={peer}");
    let (wtx, wrx) = mpsc::sync_channel::<Line>(CLIENT_BUFFER);
    let write_half = stream.try_clone()?;
    thread::Builder::new()
        .name(format!("tcp-write-{conn}"))
        .spawn(move || tcp_writer(write_half, wrx))?;
    // register the writer before any message from this client can be processed
    let _ = tx.send(Inbound::Opened { conn, writer: wtx });
    thread::Builder::new()
        .name(format!("tcp-read-{conn}"))
        .spawn(move || {
            let mut reader = BufReader::new(stream);
            let mut decoder = StreamDecoder::new();
            let mut buf = Vec::new();
            loop {
                buf.clear();
                match reader.read_until(b'\n', &mut buf) {
                    Ok(0) => break,
                    Ok(_) => {
                        if !deliver(conn, &buf, &mut decoder, &tx, start) {
                            return;
                        }
                    }
                    Err(e) => {
                        debug!("conn={conn} read error: {e}");
                        break;
                    }
                }
            }
            info!("event=client_close conn={conn} transport=tcp");
            let _ = tx.send(Inbound::Closed { conn });
        })?;
    Ok(())
}

fn tcp_writer(mut stream: TcpStream, lines: Receiver<Line>) {
    for line in lines {
        if stream.write_all(line.as_bytes()).is_err() {
            break;
        }
    }
    let _ = stream.shutdown(Shutdown::Write);
}

/// Decodes one raw line and queues it. Bad lines are logged and dropped.
/// Returns `false` once the control loop is gone.
fn deliver(
    conn: ConnId,
    raw: &[u8],
    decoder: &mut StreamDecoder,
    tx: &Sender<Inbound>,
    start: Instant,
) -> bool {
    let received_at = start.elapsed().as_secs_f64();
    let line = match std::str::from_utf8(raw) {
        Ok(l) => l.trim_end_matches(['\n', '\r']),
        Err(_) => {
            warn!("conn={conn} dropped line: invalid UTF-8");
            return true;
        }
    };
    if line.trim().is_empty() {
        return true;
    }
    match decoder.decode_line(line) {
        Ok(msg) => tx
            .send(Inbound::Message {
                conn,
                msg,
                received_at,
            })
            .is_ok(),
        Err(e) => {
            warn!("conn={conn} dropped line: {e}");
            true
        }
    }
}

fn ws_client(
    conn: ConnId,
    stream: TcpStream,
    tx: Sender<Inbound>,
    ui_dir: Option<PathBuf>,
    start: Instant,
    stop: Arc<AtomicBool>,
) {
    match http::is_websocket_upgrade(&stream) {
        Ok(true) => {}
        Ok(false) => {
            http::serve_static(stream, ui_dir.as_deref());
            return;
        }
        Err(e) => {
            debug!("conn={conn} peek failed: {e}");
            return;
        }
    }
    let mut ws = match tungstenite::accept(stream) {
        Ok(ws) => ws,
        Err(e) => {
            warn!("conn={conn} websocket handshake failed: {e}");
            return;
        }
    };
    info!("event=client_open conn={conn} transport=websocket");
    let _ = ws.get_ref().set_read_timeout(Some(POLL / 2));
    let _ = ws.get_ref().set_nodelay(true);
    let (wtx, wrx) = mpsc::sync_channel::<Line>(CLIENT_BUFFER);
    let _ = tx.send(Inbound::Opened { conn, writer: wtx });
    let mut decoder = StreamDecoder::new();

    'session: while !stop.load(Ordering::SeqCst) {
        loop {
            match wrx.try_recv() {
                Ok(line) => {
                    if ws.write(tungstenite::Message::text(line.as_ref())).is_err() {
                        break 'session;
                    }
                }
                Err(mpsc::TryRecvError::Empty) => break,
                Err(mpsc::TryRecvError::Disconnected) => break 'session,
            }
        }
        if ws.flush().is_err() {
            break;
        }
        match ws.read() {
            Ok(tungstenite::Message::Text(text)) => {
                for line in text.as_str().split('\n') {
                    if !deliver(conn, line.as_bytes(), &mut decoder, &tx, start) {
                        break 'session;
                    }
                }
            }
            Ok(tungstenite::Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(e) => {
                debug!("conn={conn} websocket error: {e}");
                break;
            }
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
    info!("event=client_close conn={conn} transport=websocket");
    let _ = tx.send(Inbound::Closed { conn });
}

struct Clients {
    writers: HashMap<ConnId, SyncSender<Line>>,
}

impl Clients {
    fn broadcast(&mut self, messages: &[WireMessage]) {
        for msg in messages {
            let line: Line = Arc::from(encode(msg));
            self.writers.retain(|conn, w| match w.try_send(line.clone()) {
                Ok(()) => true,
                Err(TrySendError::Full(_)) => {
                    warn!("conn={conn} is not keeping up, dropping output line");
                    true
                }
                Err(TrySendError::Disconnected(_)) => false,
            });
        }
    }
}

fn control_loop(
    mut session: Session,
    rx: Receiver<Inbound>,
    clock: ClockMode,
    start: Instant,
    stop: Arc<AtomicBool>,
) {
    let mut clients = Clients {
        writers: HashMap::new(),
    };
    let period = Duration::from_secs_f64(session.config().dt());
    let mut deadline = start + period;

    while !stop.load(Ordering::SeqCst) {
        let wait = match clock {
            ClockMode::Wall => deadline.saturating_duration_since(Instant::now()),
            ClockMode::Virtual => POLL,
        };
        match rx.recv_timeout(wait) {
            Ok(Inbound::Opened { conn, writer }) => {
                clients.writers.insert(conn, writer);
            }
            Ok(Inbound::Closed { conn }) => {
                // dropping the sender lets the writer flush and close
                clients.writers.remove(&conn);
            }
            Ok(Inbound::Message {
                conn,
                msg,
                received_at,
            }) => {
                debug!("conn={conn} {} seq={}", msg.message_type(), msg.seq);
                match clock {
                    ClockMode::Wall => {
                        session.ingest(&msg, received_at);
                    }
                    ClockMode::Virtual => {
                        let published = session.ingest_stamped(&msg);
                        clients.broadcast(&published);
                    }
                }
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break,
        }
        // ticks stay on schedule even under a constant inbound stream
        if clock == ClockMode::Wall && Instant::now() >= deadline {
            let now = start.elapsed().as_secs_f64();
            let report = session.tick(now);
            clients.broadcast(&report.published);
            deadline += period;
            let behind = Instant::now().saturating_duration_since(deadline);
            if behind > period * 5 {
                warn!("control loop is {behind:?} behind schedule, skipping ahead");
                deadline = Instant::now() + period;
            }
        }
    }
    debug!("control loop stopped");
}
