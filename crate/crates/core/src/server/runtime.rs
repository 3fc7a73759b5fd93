//! Running bridge: three roles connected by channels.
//!
//! Ingestion feeds frames to the tick role over one unbounded channel. The
//! tick role owns [`BridgeState`] and pushes each serialized State message into
//! a bounded queue per client. A client whose queue is full is cut off.

use std::io::{self, BufRead};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::ws::{Message, Utf8Bytes, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::header;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use thiserror::Error;
use tokio::sync::{mpsc, watch};
use tokio::task::{AbortHandle, JoinHandle};

use super::message::{
    handle_inject, hello_message, parse_client_message, state_message, ClientMessage, ClientMessageError,
    PROTOCOL_VERSION,
};
use super::state::{BridgeState, Diagnostics, DiagnosticsSnapshot, TransitionEvent};
use crate::clock::SimClock;
use crate::config::Config;
use crate::protocol::{decode_frame, SensorFrame, SensorKind};

pub enum FrameSource {
    /// No sensors; the bridge still ticks on fallback values.
    None,
    /// Frames stamped with simulated milliseconds since start, in order.
    Scheduled(Vec<SensorFrame>),
    /// Wire lines from a serial port or pipe, stamped on arrival.
    Lines(Box<dyn BufRead + Send>),
}

#[derive(Debug, Error)]
pub enum StartError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
    #[error("speed must be positive and finite, got {0}")]
    BadSpeed(f64),
}

enum Ingest {
    Frame(SensorFrame),
    /// Every scheduled frame stamped at or before this time has been sent.
    Watermark(u64),
    End,
}

struct Client {
    id: u64,
    queue: mpsc::Sender<Utf8Bytes>,
    session: AbortHandle,
}

struct Shared {
    config: Config,
    config_json: String,
    clock: SimClock,
    diagnostics: Diagnostics,
    ingest: mpsc::UnboundedSender<Ingest>,
    clients: Mutex<Vec<Client>>,
    next_client: AtomicU64,
    inject_seq: AtomicU32,
    last_state: Mutex<Option<Utf8Bytes>>,
    transitions: Mutex<Vec<TransitionEvent>>,
}

impl Shared {
    fn inject(&self, kind: SensorKind, value: f64) {
        let seq = self.inject_seq.fetch_add(1, Ordering::Relaxed) as u16;
        let (frame, clamped) = handle_inject(kind, value, seq, self.clock.now_ms());
        if clamped {
            Diagnostics::bump(&self.diagnostics.clamped);
        }
        Diagnostics::bump(&self.diagnostics.injected);
        let _ = self.ingest.send(Ingest::Frame(frame));
    }

    fn status_json(&self) -> String {
        let state = self.last_state.lock().unwrap().clone();
        let diagnostics = serde_json::to_string(&self.diagnostics.snapshot()).expect("diagnostics serialize");
        format!(r#"{{"state":{},"diagnostics":{diagnostics}}}"#, state.as_ref().map_or("null", |s| s.as_str()))
    }

    fn broadcast(&self, message: Utf8Bytes) {
        let mut clients = self.clients.lock().unwrap();
        clients.retain(|client| match client.queue.try_send(message.clone()) {
            Ok(()) => true,
            Err(mpsc::error::TrySendError::Full(_)) => {
                tracing::warn!(client = client.id, "client queue full, disconnecting");
                Diagnostics::bump(&self.diagnostics.slow_clients_dropped);
                client.session.abort();
                false
            }
            Err(mpsc::error::TrySendError::Closed(_)) => false,
        });
    }
}

/// Point-in-time view served on `/status`.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeSnapshot {
    /// The last broadcast State message, byte for byte.
    pub state: Option<String>,
    pub diagnostics: DiagnosticsSnapshot,
}

pub struct BridgeHandle {
    shared: Arc<Shared>,
    local_addr: SocketAddr,
    shutdown: watch::Sender<bool>,
    settled: watch::Receiver<bool>,
    tasks: Vec<JoinHandle<()>>,
}

impl BridgeHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn clock(&self) -> SimClock {
        self.shared.clock
    }

    pub fn config(&self) -> &Config {
        &self.shared.config
    }

    pub fn snapshot(&self) -> BridgeSnapshot {
        let state = self.shared.last_state.lock().unwrap().as_ref().map(|s| s.as_str().to_owned());
        BridgeSnapshot { state, diagnostics: self.shared.diagnostics.snapshot() }
    }

    pub fn status_json(&self) -> String {
        self.shared.status_json()
    }

    pub fn transitions(&self) -> Vec<TransitionEvent> {
        self.shared.transitions.lock().unwrap().clone()
    }

    pub fn inject(&self, kind: SensorKind, value: f64) {
        self.shared.inject(kind, value);
    }

    /// Resolves once the source has ended, every frame has been ingested and
    /// the scene has stopped changing season.
    pub async fn wait_settled(&self) {
        let mut settled = self.settled.clone();
        let _ = settled.wait_for(|done| *done).await;
    }

    pub async fn shutdown(self) {
        let _ = self.shutdown.send(true);
        for task in self.tasks {
            let _ = task.await;
        }
    }

    /// Serves until Ctrl-C.
    pub async fn run_until_ctrl_c(self) -> io::Result<()> {
        tokio::signal::ctrl_c().await?;
        tracing::info!("shutting down");
        self.shutdown().await;
        Ok(())
    }
}

/// Binds the listener and spawns every role. `speed` scales the simulated
/// clock that paces scheduled sources and the tick.
pub async fn start(config: Config, source: FrameSource, speed: f64) -> Result<BridgeHandle, StartError> {
    if !(speed.is_finite() && speed > 0.0) {
        return Err(StartError::BadSpeed(speed));
    }
    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .map_err(|source| StartError::Bind { addr: config.listen, source })?;
    let local_addr = listener.local_addr().map_err(|source| StartError::Bind { addr: config.listen, source })?;

    let (ingest, ingest_rx) = mpsc::unbounded_channel();
    let (shutdown, shutdown_rx) = watch::channel(false);
    let (settled_tx, settled) = watch::channel(false);
    let clock = SimClock::new(speed);
    let shared = Arc::new(Shared {
        config_json: config.to_json(),
        config,
        clock,
        diagnostics: Diagnostics::default(),
        ingest: ingest.clone(),
        clients: Mutex::new(Vec::new()),
        next_client: AtomicU64::new(0),
        inject_seq: AtomicU32::new(0),
        last_state: Mutex::new(None),
        transitions: Mutex::new(Vec::new()),
    });

    let scheduled = matches!(source, FrameSource::Scheduled(_));
    let mut tasks = Vec::new();
    match source {
        FrameSource::None => {
            let _ = ingest.send(Ingest::End);
        }
        FrameSource::Scheduled(frames) => {
            let mut stop = shutdown_rx.clone();
            tasks.push(tokio::spawn(async move {
                tokio::select! {
                    _ = feed_schedule(frames, clock, ingest) => {}
                    _ = stop.wait_for(|s| *s) => {}
                }
            }));
        }
        FrameSource::Lines(reader) => {
            let shared = shared.clone();
            std::thread::Builder::new()
                .name("serial-ingest".into())
                .spawn(move || read_lines(reader, &shared))
                .expect("spawn ingestion thread");
        }
    }

    let mut stop = shutdown_rx.clone();
    let tick_shared = shared.clone();
    tasks.push(tokio::spawn(async move {
        tokio::select! {
            _ = tick_loop(tick_shared, ingest_rx, scheduled, settled_tx) => {}
            _ = stop.wait_for(|s| *s) => {}
        }
    }));

    let router = Router::new()
        .route("/ws", get(ws_upgrade))
        .route("/status", get(status))
        .route("/config", get(config_route))
        .with_state(shared.clone());
    let mut stop = shutdown_rx;
    let serve_shared = shared.clone();
    tasks.push(tokio::spawn(async move {
        let graceful = async move {
            let _ = stop.wait_for(|s| *s).await;
            for client in serve_shared.clients.lock().unwrap().drain(..) {
                client.session.abort();
            }
        };
        if let Err(e) = axum::serve(listener, router).with_graceful_shutdown(graceful).await {
            tracing::error!("server error: {e}");
        }
    }));

    tracing::info!(%local_addr, speed, "bridge started");
    Ok(BridgeHandle { shared, local_addr, shutdown, settled, tasks })
}

async fn feed_schedule(frames: Vec<SensorFrame>, clock: SimClock, ingest: mpsc::UnboundedSender<Ingest>) {
    let mut i = 0;
    if let Some(first) = frames.first() {
        if first.received_at > 0 {
            let _ = ingest.send(Ingest::Watermark(first.received_at - 1));
        }
    }
    while i < frames.len() {
        let at = frames[i].received_at;
        clock.sleep_until(at).await;
        while i < frames.len() && frames[i].received_at <= at {
            if ingest.send(Ingest::Frame(frames[i])).is_err() {
                return;
            }
            i += 1;
        }
        let through = frames.get(i).map_or(u64::MAX, |f| f.received_at - 1);
        let _ = ingest.send(Ingest::Watermark(through));
    }
    let _ = ingest.send(Ingest::End);
}

fn read_lines(mut reader: Box<dyn BufRead + Send>, shared: &Shared) {
    let mut line = Vec::new();
    loop {
        match reader.read_until(b'\n', &mut line) {
            Ok(0) => break,
            Ok(_) => {}
            // serial reads time out while the board is quiet; keep the partial line
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::TimedOut | io::ErrorKind::Interrupted | io::ErrorKind::WouldBlock
                ) =>
            {
                continue
            }
            Err(e) => {
                tracing::error!("sensor read failed: {e}");
                break;
            }
        }
        if line.iter().any(|b| !b.is_ascii_whitespace()) {
            match decode_frame(&line, shared.clock.now_ms()) {
                Ok(decoded) => {
                    if decoded.clamped {
                        Diagnostics::bump(&shared.diagnostics.clamped);
                    }
                    if shared.ingest.send(Ingest::Frame(decoded.frame)).is_err() {
                        return;
                    }
                }
                Err(e) => shared.diagnostics.record_decode_error(e),
            }
        }
        line.clear();
    }
    let _ = shared.ingest.send(Ingest::End);
}

async fn tick_loop(
    shared: Arc<Shared>,
    mut rx: mpsc::UnboundedReceiver<Ingest>,
    scheduled: bool,
    settled: watch::Sender<bool>,
) {
    let config = &shared.config;
    let mut bridge = BridgeState::new(config);
    let mut watermark = if scheduled { None } else { Some(u64::MAX) };
    let mut ended = false;
    let mut pending: Vec<SensorFrame> = Vec::new();
    let receive = |item, watermark: &mut Option<u64>, ended: &mut bool, pending: &mut Vec<SensorFrame>| match item {
        Ingest::Frame(frame) => pending.push(frame),
        Ingest::Watermark(w) => *watermark = Some(w),
        Ingest::End => {
            *watermark = Some(u64::MAX);
            *ended = true;
        }
    };

    for k in 0u64.. {
        let now = config.tick_time_ms(k);
        shared.clock.sleep_until(now).await;

        while let Ok(item) = rx.try_recv() {
            receive(item, &mut watermark, &mut ended, &mut pending);
        }
        while watermark.is_none_or(|w| w < now) {
            match rx.recv().await {
                Some(item) => receive(item, &mut watermark, &mut ended, &mut pending),
                None => break,
            }
        }

        // frames stamped after this tick wait for a later one
        pending.sort_by_key(|f| f.received_at);
        let due = pending.partition_point(|f| f.received_at <= now);
        for frame in pending.drain(..due) {
            if !bridge.ingest(&frame) {
                Diagnostics::bump(&shared.diagnostics.dropped_samples);
            }
        }

        let boost_before = bridge.flame_boost();
        let outcome = bridge.tick(now);
        if let Some(event) = outcome.transition {
            tracing::info!(tick = event.tick, from = %event.from, to = %event.to, "season change");
            shared.transitions.lock().unwrap().push(event);
        }
        if let Some(scene) = outcome.scene {
            let message = Utf8Bytes::from(state_message(&scene));
            *shared.last_state.lock().unwrap() = Some(message.clone());
            shared.broadcast(message);
        }

        let quiet = outcome.scene.is_some() && outcome.transition.is_none() && bridge.flame_boost() == boost_before;
        if ended && pending.is_empty() && quiet && !*settled.borrow() {
            let _ = settled.send(true);
        }
    }
}

async fn status(State(shared): State<Arc<Shared>>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], shared.status_json()).into_response()
}

async fn config_route(State(shared): State<Arc<Shared>>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], shared.config_json.clone()).into_response()
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> Response {
    ws.on_upgrade(move |socket| client_connected(socket, shared))
}

async fn client_connected(socket: WebSocket, shared: Arc<Shared>) {
    let id = shared.next_client.fetch_add(1, Ordering::Relaxed);
    let (queue, rx) = mpsc::channel(shared.config.client_queue);
    let session = tokio::spawn(client_session(socket, rx, shared.clone()));
    shared.clients.lock().unwrap().push(Client { id, queue, session: session.abort_handle() });
    tracing::debug!(client = id, "client connected");
    let _ = session.await;
    shared.clients.lock().unwrap().retain(|c| c.id != id);
    tracing::debug!(client = id, "client gone");
}

async fn client_session(socket: WebSocket, mut rx: mpsc::Receiver<Utf8Bytes>, shared: Arc<Shared>) {
    let (mut sink, mut stream) = socket.split();
    if sink.send(Message::Text(hello_message().into())).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            outgoing = rx.recv() => match outgoing {
                Some(text) => {
                    if sink.send(Message::Text(text)).await.is_err() {
                        return;
                    }
                }
                None => return,
            },
            incoming = stream.next() => match incoming {
                Some(Ok(Message::Text(text))) => handle_client_text(&shared, text.as_str()),
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

fn handle_client_text(shared: &Shared, text: &str) {
    let diagnostics = &shared.diagnostics;
    match parse_client_message(text) {
        Ok(ClientMessage::Inject { kind, value }) => shared.inject(kind, value),
        Ok(ClientMessage::Hello { v }) if v != PROTOCOL_VERSION => {
            tracing::warn!(v, "client speaks another protocol version");
            Diagnostics::bump(&diagnostics.version_mismatch);
        }
        Ok(ClientMessage::Hello { .. }) => {}
        Err(ClientMessageError::UnknownKind) => Diagnostics::bump(&diagnostics.unknown_kind),
        Err(ClientMessageError::UnknownType | ClientMessageError::Malformed) => {
            Diagnostics::bump(&diagnostics.unknown_messages)
        }
    }
}
