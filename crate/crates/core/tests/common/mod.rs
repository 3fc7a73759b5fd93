#![allow(dead_code)]

use std::net::SocketAddr;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use serde_json::Value;
use tangible_bridge::config::Config;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpSocket, TcpStream};
use tokio::time::Instant;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

pub type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

pub fn test_config() -> Config {
    Config { listen: "127.0.0.1:0".parse().unwrap(), ..Config::default() }
}

/// Minimal HTTP/1.1 GET; returns status code and body.
pub async fn http_get(addr: SocketAddr, path: &str) -> (u16, String) {
    let mut stream = TcpStream::connect(addr).await.unwrap();
    let request = format!("GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n");
    stream.write_all(request.as_bytes()).await.unwrap();
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw).await.unwrap();
    let text = String::from_utf8(raw).unwrap();
    let (head, body) = text.split_once("\r\n\r\n").unwrap();
    let status = head.split(' ').nth(1).unwrap().parse().unwrap();
    let body =
        if head.to_ascii_lowercase().contains("transfer-encoding: chunked") { dechunk(body) } else { body.to_owned() };
    (status, body)
}

fn dechunk(mut body: &str) -> String {
    let mut out = String::new();
    loop {
        let (size, rest) = body.split_once("\r\n").unwrap();
        let size = usize::from_str_radix(size.trim(), 16).unwrap();
        if size == 0 {
            return out;
        }
        out.push_str(&rest[..size]);
        body = &rest[size + 2..];
    }
}

pub async fn connect(addr: SocketAddr) -> Ws {
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
    let hello = next_text(&mut ws).await.expect("hello");
    assert_eq!(hello, r#"{"type":"hello","v":1}"#);
    ws
}

/// A client that never reads, with a tiny receive buffer so the server's
/// writes back up quickly.
pub async fn connect_stalled(addr: SocketAddr) -> Ws {
    let socket = TcpSocket::new_v4().unwrap();
    socket.set_recv_buffer_size(1024).unwrap();
    let stream = socket.connect(addr).await.unwrap();
    let (ws, _) =
        tokio_tungstenite::client_async(format!("ws://{addr}/ws"), MaybeTlsStream::Plain(stream)).await.unwrap();
    ws
}

pub async fn send(ws: &mut Ws, text: &str) {
    ws.send(Message::text(text)).await.unwrap();
}

pub async fn next_text(ws: &mut Ws) -> Option<String> {
    loop {
        match ws.next().await? {
            Ok(Message::Text(text)) => return Some(text.to_string()),
            Ok(Message::Close(_)) | Err(_) => return None,
            Ok(_) => {}
        }
    }
}

#[derive(Debug, Clone)]
pub struct Received {
    pub raw: String,
    pub json: Value,
    pub at: Instant,
}

impl Received {
    pub fn tick(&self) -> u64 {
        self.json["tick"].as_u64().unwrap()
    }
}

/// Collects State messages for `span` of wall time.
pub async fn collect_states(ws: &mut Ws, span: Duration) -> Vec<Received> {
    let deadline = Instant::now() + span;
    let mut out = Vec::new();
    while let Ok(Some(raw)) = tokio::time::timeout_at(deadline, next_text(ws)).await {
        let json: Value = serde_json::from_str(&raw).unwrap();
        if json["type"] == "state" {
            out.push(Received { raw, json, at: Instant::now() });
        }
    }
    out
}

/// Reads until a State message satisfies `pred`, giving up after `limit`.
pub async fn wait_state(ws: &mut Ws, limit: Duration, mut pred: impl FnMut(&Value) -> bool) -> Option<Received> {
    let deadline = Instant::now() + limit;
    while let Ok(Some(raw)) = tokio::time::timeout_at(deadline, next_text(ws)).await {
        let json: Value = serde_json::from_str(&raw).unwrap();
        if json["type"] == "state" && pred(&json) {
            return Some(Received { raw, json, at: Instant::now() });
        }
    }
    None
}
