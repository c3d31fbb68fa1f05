use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use tungstenite::handshake::derive_accept_key;
use tungstenite::protocol::Role;
use tungstenite::{Message, WebSocket};

use crate::hub::Runtime;

pub const WS_PATH: &str = "/ws";
/// How long a connection thread blocks reading before it checks its outbox.
pub const POLL_INTERVAL: Duration = Duration::from_millis(20);
const MAX_HEAD: usize = 16 * 1024;

#[derive(Debug, Default, PartialEq, Eq)]
struct RequestHead {
    method: String,
    path: String,
    headers: Vec<(String, String)>,
}

impl RequestHead {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    fn is_websocket(&self) -> bool {
        self.header("upgrade").is_some_and(|u| u.eq_ignore_ascii_case("websocket"))
            && self.header("sec-websocket-key").is_some()
    }
}

fn read_head(reader: &mut impl BufRead) -> io::Result<RequestHead> {
    let mut head = RequestHead::default();
    let mut total = 0;
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        total += n;
        if n == 0 || total > MAX_HEAD {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "incomplete request head"));
        }
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if head.method.is_empty() {
            let mut parts = l.split_whitespace();
            head.method = parts.next().unwrap_or_default().to_owned();
            head.path = parts.next().unwrap_or_default().to_owned();
        } else if let Some((k, v)) = l.split_once(':') {
            head.headers.push((k.trim().to_owned(), v.trim().to_owned()));
        }
    }
    Ok(head)
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json" | "map") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("ico") => "image/x-icon",
        _ => "application/octet-stream",
    }
}

/// Maps a request path onto a file under `root`, refusing anything that
/// would leave it.
fn resolve_static(root: &Path, request_path: &str) -> Option<PathBuf> {
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

fn respond(stream: &mut TcpStream, status: &str, ctype: &str, body: &[u8]) -> io::Result<()> {
    write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: {ctype}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    )?;
    stream.write_all(body)?;
    stream.flush()
}

fn serve_http(stream: &mut TcpStream, head: &RequestHead, static_dir: Option<&Path>) -> io::Result<()> {
    if head.method != "GET" {
        return respond(stream, "405 Method Not Allowed", "text/plain", b"method not allowed\n");
    }
    match static_dir {
        Some(root) => match resolve_static(root, &head.path) {
            Some(file) => respond(stream, "200 OK", content_type(&file), &std::fs::read(&file)?),
            None => respond(stream, "404 Not Found", "text/plain", b"not found\n"),
        },
        None if head.path == "/" => respond(
            stream,
            "200 OK",
            "text/plain",
            b"reactorkit gateway: open a WebSocket on /ws\n",
        ),
        None => respond(stream, "404 Not Found", "text/plain", b"not found\n"),
    }
}

fn is_timeout(e: &io::Error) -> bool {
    matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut)
}

fn run_socket(mut ws: WebSocket<TcpStream>, runtime: &Runtime) -> Result<(), Box<tungstenite::Error>> {
    let outbox = runtime.hub().subscribe();
    let result = loop {
        for line in outbox.drain() {
            ws.write(Message::Text(line)).map_err(Box::new)?;
        }
        match ws.flush() {
            Err(tungstenite::Error::Io(e)) if is_timeout(&e) => {}
            other => other.map_err(Box::new)?,
        }
        if outbox.is_closed() {
            break Ok(());
        }
        match ws.read() {
            Ok(Message::Text(text)) => runtime.inject_text(&text, &outbox),
            Ok(Message::Binary(bytes)) => runtime.inject_text(&String::from_utf8_lossy(&bytes), &outbox),
            Ok(Message::Close(_)) => {}
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if is_timeout(&e) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => break Ok(()),
            Err(e) => break Err(Box::new(e)),
        }
    };
    outbox.close();
    result
}

fn handle_connection(mut stream: TcpStream, runtime: &Runtime, static_dir: Option<&Path>) -> io::Result<()> {
    let head = {
        let mut reader = BufReader::new(stream.try_clone()?);
        let head = read_head(&mut reader)?;
        if !reader.buffer().is_empty() && head.is_websocket() {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "data before handshake completed"));
        }
        head
    };
    if head.path.split('?').next() != Some(WS_PATH) || !head.is_websocket() {
        return serve_http(&mut stream, &head, static_dir);
    }
    let key = head.header("sec-websocket-key").unwrap_or_default();
    write!(
        stream,
        "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Accept: {}\r\n\r\n",
        derive_accept_key(key.as_bytes())
    )?;
    stream.flush()?;
    stream.set_read_timeout(Some(POLL_INTERVAL))?;
    let ws = WebSocket::from_raw_socket(stream, Role::Server, None);
    run_socket(ws, runtime).map_err(io::Error::other)
}

/// Accepts connections until the listener fails. Each connection gets one
/// thread that both writes its outbox and reads inbound messages.
pub fn serve(listener: TcpListener, runtime: Arc<Runtime>, static_dir: Option<PathBuf>) -> io::Result<()> {
    let static_dir = static_dir.map(Arc::new);
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
        let (runtime, dir) = (runtime.clone(), static_dir.clone());
        thread::Builder::new().name(format!("conn-{peer}")).spawn(move || {
            log::info!("connection from {peer}");
            if let Err(e) = handle_connection(stream, &runtime, dir.as_deref().map(PathBuf::as_path)) {
                log::info!("connection {peer} ended: {e}");
            }
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_request_head() {
        let raw = b"GET /ws HTTP/1.1\r\nHost: x\r\nUpgrade: websocket\r\nSec-WebSocket-Key: abc\r\n\r\n";
        let head = read_head(&mut &raw[..]).unwrap();
        assert_eq!((head.method.as_str(), head.path.as_str()), ("GET", "/ws"));
        assert!(head.is_websocket());
        assert_eq!(head.header("HOST"), Some("x"));
        assert!(read_head(&mut &b"GET / HTTP/1.1\r\n"[..]).is_err());
    }

    #[test]
    fn static_paths_stay_inside_root() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("index.html"), "hi").unwrap();
        std::fs::write(dir.path().join("app.js"), "x").unwrap();
        assert_eq!(resolve_static(dir.path(), "/"), Some(dir.path().join("index.html")));
        assert_eq!(resolve_static(dir.path(), "/app.js?v=1"), Some(dir.path().join("app.js")));
        assert_eq!(resolve_static(dir.path(), "/../secret"), None);
        assert_eq!(resolve_static(dir.path(), "/missing.css"), None);
        assert_eq!(content_type(Path::new("a.js")), "text/javascript");
    }
}
