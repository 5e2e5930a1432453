//! Minimal HTTP handling on the WebSocket port: tells upgrade requests apart
//! from plain GETs and serves the operator UI's static files for the latter.

use std::io::{self, Read, Write};
use std::net::TcpStream;
use std::path::{Component, Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use log::debug;

const MAX_HEAD: usize = 8192;
const HEAD_TIMEOUT: Duration = Duration::from_secs(2);

/// Peeks at the request head without consuming it.
pub fn is_websocket_upgrade(stream: &TcpStream) -> io::Result<bool> {
    let mut buf = vec![0u8; MAX_HEAD];
    let deadline = Instant::now() + HEAD_TIMEOUT;
    stream.set_read_timeout(Some(HEAD_TIMEOUT))?;
    loop {
        let n = stream.peek(&mut buf)?;
        if n == 0 {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "closed before request"));
        }
        let head = &buf[..n];
        if head.windows(4).any(|w| w == b"\r\n\r\n") || n == MAX_HEAD {
            stream.set_read_timeout(None)?;
            let text = String::from_utf8_lossy(head).to_ascii_lowercase();
            return Ok(text
                .lines()
                .any(|l| l.starts_with("upgrade:") && l.contains("websocket")));
        }
        if Instant::now() > deadline {
            return Err(io::Error::new(io::ErrorKind::TimedOut, "incomplete request head"));
        }
        thread::sleep(Duration::from_millis(2));
    }
}

fn read_head(stream: &mut TcpStream) -> io::Result<String> {
    let mut head = Vec::new();
    let mut byte = [0u8; 1];
    while !head.ends_with(b"\r\n\r\n") && head.len() < MAX_HEAD {
        if stream.read(&mut byte)? == 0 {
            break;
        }
        head.push(byte[0]);
    }
    Ok(String::from_utf8_lossy(&head).into_owned())
}

/// Maps a request path onto a file under `root`, refusing anything that
/// would escape it.
pub fn resolve(root: &Path, request_path: &str) -> Option<PathBuf> {
    let path = request_path.split(['?', '#']).next().unwrap_or("/");
    let rel = Path::new(path.trim_start_matches('/'));
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return None;
    }
    let mut full = root.join(rel);
    if full.is_dir() {
        full.push("index.html");
    }
    full.is_file().then_some(full)
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("wasm") => "application/wasm",
        _ => "application/octet-stream",
    }
}

fn respond(stream: &mut TcpStream, status: &str, ctype: &str, body: &[u8]) -> io::Result<()> {
    write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: {ctype}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    )?;
    stream.write_all(body)?;
    stream.flush()
}

pub fn serve_static(mut stream: TcpStream, root: Option<&Path>) {
    let result = (|| -> io::Result<()> {
        let head = read_head(&mut stream)?;
        let mut parts = head.lines().next().unwrap_or("").split_whitespace();
        let (method, path) = (parts.next().unwrap_or(""), parts.next().unwrap_or("/"));
        if method != "GET" && method != "HEAD" {
            return respond(&mut stream, "405 Method Not Allowed", "text/plain", b"method not allowed\n");
        }
        let Some(root) = root else {
            return respond(&mut stream, "404 Not Found", "text/plain", b"no UI directory configured\n");
        };
        match resolve(root, path) {
            Some(file) => {
                let body = std::fs::read(&file)?;
                let body = if method == "HEAD" { &[][..] } else { &body[..] };
                respond(&mut stream, "200 OK", content_type(&file), body)
            }
            None => respond(&mut stream, "404 Not Found", "text/plain", b"not found\n"),
        }
    })();
    if let Err(e) = result {
        debug!("static request failed: {e}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolve_stays_inside_root() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("index.html"), "<html/>").unwrap();
        std::fs::create_dir(dir.path().join("js")).unwrap();
        std::fs::write(dir.path().join("js/app.js"), "").unwrap();
        assert_eq!(resolve(dir.path(), "/"), Some(dir.path().join("index.html")));
        assert_eq!(resolve(dir.path(), "/js/app.js?v=2"), Some(dir.path().join("js/app.js")));
        assert_eq!(resolve(dir.path(), "/../etc/passwd"), None);
        assert_eq!(resolve(dir.path(), "/missing.css"), None);
    }

    #[test]
    fn content_types() {
        assert_eq!(content_type(Path::new("a.html")), "text/html; charset=utf-8");
        assert_eq!(content_type(Path::new("a.js")), "text/javascript");
        assert_eq!(content_type(Path::new("a")), "application/octet-stream");
    }
}
