//! Replays an expanded input script against a running relay over TCP.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use telequest_core::protocol::encode;
use telequest_core::script::TimedMessage;

#[derive(Debug, Clone)]
pub struct PlayOptions {
    pub endpoint: String,
    /// Playback speed multiplier; 2.0 plays twice as fast.
    pub speed: f64,
    /// How long to wait for the relay to finish after the last line is sent.
    pub drain_timeout: Duration,
}

impl Default for PlayOptions {
    fn default() -> Self {
        Self {
            endpoint: format!("127.0.0.1:{}", telequest_core::protocol::DEFAULT_TCP_PORT),
            speed: 1.0,
            drain_timeout: Duration::from_secs(5),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PlayReport {
    /// Actual send time of each message, seconds after playback start.
    pub send_offsets: Vec<f64>,
    /// Every line the relay sent back, newline included.
    pub received: Vec<String>,
    /// False if the relay did not close the stream within the drain timeout.
    pub drained: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum PlayError {
    #[error("playback speed must be positive and finite, got {0}")]
    Speed(f64),
    #[error("cannot connect to {endpoint}: {source}")]
    Connect { endpoint: String, source: io::Error },
    #[error("connection lost: {0}")]
    Io(#[from] io::Error),
}

fn connect(endpoint: &str) -> Result<TcpStream, PlayError> {
    let err = |source| PlayError::Connect {
        endpoint: endpoint.to_owned(),
        source,
    };
    let addrs: Vec<_> = endpoint.to_socket_addrs().map_err(err)?.collect();
    let mut last = io::Error::new(io::ErrorKind::NotFound, "no address");
    for addr in addrs {
        match TcpStream::connect_timeout(&addr, Duration::from_secs(3)) {
            Ok(s) => return Ok(s),
            Err(e) => last = e,
        }
    }
    Err(err(last))
}

pub fn play(messages: &[TimedMessage], opts: &PlayOptions) -> Result<PlayReport, PlayError> {
    if !(opts.speed.is_finite() && opts.speed > 0.0) {
        return Err(PlayError::Speed(opts.speed));
    }
    let stream = connect(&opts.endpoint)?;
    stream.set_nodelay(true)?;
    let (tx, rx) = mpsc::channel();
    let reader = BufReader::new(stream.try_clone()?);
    thread::spawn(move || {
        let mut received = Vec::new();
        for line in reader.split(b'\n') {
            match line {
                Ok(mut bytes) => {
                    bytes.push(b'\n');
                    received.push(String::from_utf8_lossy(&bytes).into_owned());
                }
                Err(_) => break,
            }
        }
        let _ = tx.send(received);
    });

    let mut writer = stream.try_clone()?;
    let mut report = PlayReport::default();
    let t0 = messages.first().map_or(0.0, |m| m.t);
    let start = Instant::now();
    for m in messages {
        let due = start + Duration::from_secs_f64(((m.t - t0) / opts.speed).max(0.0));
        sleep_until(due);
        writer.write_all(encode(&m.message).as_bytes())?;
        report.send_offsets.push(start.elapsed().as_secs_f64());
    }
    writer.flush()?;
    stream.shutdown(Shutdown::Write)?;

    match rx.recv_timeout(opts.drain_timeout) {
        Ok(received) => {
            report.received = received;
            report.drained = true;
        }
        Err(_) => {
            let _ = stream.shutdown(Shutdown::Both);
            report.received = rx.recv().unwrap_or_default();
        }
    }
    Ok(report)
}

/// Coarse sleep followed by a short spin for millisecond-level accuracy.
fn sleep_until(due: Instant) {
    loop {
        let now = Instant::now();
        if now >= due {
            return;
        }
        let left = due - now;
        if left > Duration::from_millis(2) {
            thread::sleep(left - Duration::from_millis(1));
        } else {
            std::hint::spin_loop();
        }
    }
}
