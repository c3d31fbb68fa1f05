use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use reactorkit::apps::AppConfig;
use reactorkit_gateway::{ws, ClockChoice, Runtime};
use serde_json::{json, Value};
use tungstenite::{connect, Message};

fn start(clock: ClockChoice, static_dir: Option<std::path::PathBuf>) -> u16 {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    let rt = Arc::new(Runtime::start(AppConfig::default(), clock).unwrap());
    thread::spawn(move || ws::serve(listener, rt, static_dir));
    port
}

type Client = tungstenite::WebSocket<tungstenite::stream::MaybeTlsStream<TcpStream>>;

fn recv(ws: &mut Client) -> Value {
    match ws.read().unwrap() {
        Message::Text(t) => serde_json::from_str(&t).unwrap(),
        other => panic!("unexpected {other:?}"),
    }
}

fn recv_until(ws: &mut Client, timeout: Duration, pred: impl Fn(&Value) -> bool) -> Value {
    let deadline = Instant::now() + timeout;
    loop {
        assert!(Instant::now() < deadline, "timed out");
        let m = recv(ws);
        if pred(&m) {
            return m;
        }
    }
}

#[test]
fn snapshot_then_counter_view() {
    let port = start(ClockChoice::Fake, None);
    let (mut ws, _) = connect(format!("ws://127.0.0.1:{port}/ws")).unwrap();
    let apps: Vec<Value> = (0..3).map(|_| recv(&mut ws)["app"].clone()).collect();
    assert_eq!(apps, vec![json!("counter"), json!("timer"), json!("prime")]);
    ws.send(Message::Text(r#"{"app":"counter","event":"increment"}"#.into())).unwrap();
    let m = recv(&mut ws);
    assert_eq!(m["type"], "view");
    assert_eq!(m["seq"], 4);
    assert_eq!(m["body"], json!({"value":1,"inc":true,"dec":true,"reset":true}));
}

#[test]
fn invalid_number_is_reported_and_connection_kept() {
    let port = start(ClockChoice::Fake, None);
    let (mut ws, _) = connect(format!("ws://127.0.0.1:{port}/ws")).unwrap();
    for _ in 0..3 {
        recv(&mut ws);
    }
    ws.send(Message::Text(r#"{"app":"prime","event":"check","args":{"n":"abc"}}"#.into())).unwrap();
    let m = recv(&mut ws);
    assert_eq!(m["type"], "error");
    assert!(m["body"]["message"].as_str().unwrap().contains("invalid number"));
    ws.send(Message::Text("{oops".into())).unwrap();
    assert_eq!(recv(&mut ws)["type"], "error");
    ws.send(Message::Text(r#"{"app":"counter","event":"reset"}"#.into())).unwrap();
    assert_eq!(recv(&mut ws)["type"], "view");
}

#[test]
fn views_reach_every_client() {
    let port = start(ClockChoice::Fake, None);
    let (mut a, _) = connect(format!("ws://127.0.0.1:{port}/ws")).unwrap();
    let (mut b, _) = connect(format!("ws://127.0.0.1:{port}/ws")).unwrap();
    for _ in 0..3 {
        recv(&mut a);
        recv(&mut b);
    }
    a.send(Message::Text(r#"{"app":"timer","event":"button_press"}"#.into())).unwrap();
    for ws in [&mut a, &mut b] {
        let m = recv_until(ws, Duration::from_secs(5), |m| m["app"] == "timer");
        assert_eq!(m["body"]["display"], "01");
    }
}

#[test]
fn prime_cancel_mid_run_returns_slot_to_neutral() {
    let port = start(ClockChoice::Real, None);
    let (mut ws, _) = connect(format!("ws://127.0.0.1:{port}/ws")).unwrap();
    for _ in 0..3 {
        recv(&mut ws);
    }
    ws.send(Message::Text(r#"{"app":"prime","event":"check","args":{"n":"100000007","mode":"async"}}"#.into()))
        .unwrap();
    recv_until(&mut ws, Duration::from_secs(10), |m| m["body"]["slots"][0]["status"] == "checking");
    ws.send(Message::Text(r#"{"app":"prime","event":"cancel_all"}"#.into())).unwrap();
    let m = recv_until(&mut ws, Duration::from_secs(10), |m| {
        m["app"] == "prime" && m["body"]["slots"][0]["status"] != "checking"
    });
    assert_eq!(m["body"]["slots"][0]["status"], "neutral");
}

#[test]
fn plain_http_and_static_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<p>ui</p>").unwrap();
    let port = start(ClockChoice::Fake, Some(dir.path().to_path_buf()));
    let get = |path: &str| {
        let mut s = TcpStream::connect(("127.0.0.1", port)).unwrap();
        write!(s, "GET {path} HTTP/1.1\r\nHost: x\r\n\r\n").unwrap();
        let mut body = String::new();
        s.read_to_string(&mut body).unwrap();
        body
    };
    let index = get("/");
    assert!(index.starts_with("HTTP/1.1 200"));
    assert!(index.ends_with("<p>ui</p>"));
    assert!(get("/../etc/passwd").starts_with("HTTP/1.1 404"));
}
