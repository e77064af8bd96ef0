#![allow(dead_code)]

use std::net::SocketAddr;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use psf_core::sim::{scenarios, ScenarioConfig};
use psf_teleop::wire::{parse_server, ServerMessage};
use psf_teleop::Served;
use psf_teleop::Server;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

pub type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

pub fn empty_teleop() -> ScenarioConfig {
    let mut c = scenarios::teleop();
    c.obstacles.clear();
    c
}

pub struct Running {
    pub addr: SocketAddr,
    stop: oneshot::Sender<()>,
    handle: JoinHandle<Result<Served, psf_teleop::ServeError>>,
}

impl Running {
    pub async fn start(config: ScenarioConfig) -> Running {
        let server = Server::bind(config, "127.0.0.1:0").await.unwrap();
        let addr = server.local_addr();
        let (stop, rx) = oneshot::channel::<()>();
        let handle = tokio::spawn(server.run_until(async {
            let _ = rx.await;
        }));
        Running { addr, stop, handle }
    }

    pub async fn connect(&self) -> Ws {
        let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{}/ws", self.addr))
            .await
            .unwrap();
        ws
    }

    pub async fn stop(self) -> Served {
        let _ = self.stop.send(());
        tokio::time::timeout(Duration::from_secs(10), self.handle)
            .await
            .expect("server stops")
            .unwrap()
            .unwrap()
    }

    /// Raw HTTP/1.1 GET; returns (status line, body).
    pub async fn get(&self, path: &str) -> (String, String) {
        let mut s = TcpStream::connect(self.addr).await.unwrap();
        s.write_all(format!("GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").as_bytes())
            .await
            .unwrap();
        let mut buf = String::new();
        s.read_to_string(&mut buf).await.unwrap();
        let (head, body) = buf.split_once("\r\n\r\n").unwrap();
        (head.lines().next().unwrap().to_string(), body.to_string())
    }
}

pub async fn send(ws: &mut Ws, text: impl Into<String>) {
    ws.send(Message::Text(text.into().into())).await.unwrap();
}

/// Next server message with its seq; panics after `timeout`.
pub async fn next(ws: &mut Ws, timeout: Duration) -> (u64, ServerMessage) {
    loop {
        let msg = tokio::time::timeout(timeout, ws.next())
            .await
            .expect("message before timeout")
            .expect("stream open")
            .expect("frame");
        if let Message::Text(t) = msg {
            return parse_server(t.as_str()).expect("valid server message");
        }
    }
}

/// Reads until `pred` matches, checking seq increases; panics after `timeout`.
pub async fn wait_for<T>(ws: &mut Ws, timeout: Duration, mut pred: impl FnMut(&ServerMessage) -> Option<T>) -> T {
    let deadline = tokio::time::Instant::now() + timeout;
    let mut last = 0;
    loop {
        let left = deadline.saturating_duration_since(tokio::time::Instant::now());
        assert!(!left.is_zero(), "condition not met within {timeout:?}");
        let (seq, m) = next(ws, left).await;
        assert!(seq > last, "seq {seq} after {last}");
        last = seq;
        if let Some(v) = pred(&m) {
            return v;
        }
    }
}
