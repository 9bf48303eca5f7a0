//! Live-play server. `/play` is a WebSocket carrying one JSON message per
//! text frame; `/layout`, `/metrics` and `/health` are plain JSON GETs.

pub mod live;
pub mod metrics;
pub mod protocol;

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use mutable_core::pipeline::PipelineConfig;
use tokio::net::TcpListener;
use tokio::sync::mpsc;

pub use live::LiveSession;
pub use metrics::{Collector, MetricsSnapshot};
pub use protocol::{ServerMessage, SessionMessage, SessionMetrics};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Core(#[from] mutable_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Read-only config plus the shared collector.
#[derive(Clone)]
pub struct AppState {
    config: Arc<PipelineConfig>,
    seed: u64,
    next_session: Arc<AtomicU64>,
    metrics: Arc<Mutex<Collector>>,
}

impl AppState {
    pub fn new(config: PipelineConfig, seed: u64) -> Result<Self, ServeError> {
        config.validate()?;
        Ok(Self {
            config: Arc::new(config),
            seed,
            next_session: Arc::new(AtomicU64::new(0)),
            metrics: Arc::new(Mutex::new(Collector::default())),
        })
    }

    pub fn metrics(&self) -> MetricsSnapshot {
        self.metrics.lock().expect("metrics lock").snapshot()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/play", get(play))
        .route("/layout", get(layout))
        .route("/metrics", get(metrics_handler))
        .route("/health", get(health))
        .with_state(state)
}

/// Serve until the listener fails.
pub async fn serve(listener: TcpListener, state: AppState) -> Result<(), ServeError> {
    axum::serve(listener, router(state)).await?;
    Ok(())
}

/// Bind `addr` and return the bound address with the server future.
pub async fn bind(
    addr: SocketAddr,
    state: AppState,
) -> Result<(SocketAddr, impl std::future::Future<Output = Result<(), ServeError>>), ServeError> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((local, serve(listener, state)))
}

async fn layout(State(s): State<AppState>) -> impl IntoResponse {
    Json(s.config.layout.clone())
}

async fn metrics_handler(State(s): State<AppState>) -> impl IntoResponse {
    Json(s.metrics())
}

async fn health() -> impl IntoResponse {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn play(ws: WebSocketUpgrade, State(s): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| session_loop(socket, s))
}

fn encode(msg: &ServerMessage) -> Message {
    Message::Text(serde_json::to_string(msg).expect("server message serializes").into())
}

async fn session_loop(mut socket: WebSocket, state: AppState) {
    let id = state.next_session.fetch_add(1, Ordering::Relaxed);
    let mut live = match LiveSession::new((*state.config).clone(), state.seed.wrapping_add(id)) {
        Ok(l) => l,
        Err(e) => {
            let _ = socket.send(encode(&ServerMessage::error(e.to_string()))).await;
            return;
        }
    };
    state.metrics.lock().expect("metrics lock").session_opened();
    tracing::debug!(session = id, "opened");

    // composition cues arrive from timer tasks
    let (cue_tx, mut cue_rx) = mpsc::unbounded_channel::<ServerMessage>();
    let mut timers = Vec::new();

    if socket.send(encode(&live.layout_info())).await.is_ok() {
        loop {
            tokio::select! {
                Some(cue) = cue_rx.recv() => {
                    if socket.send(encode(&cue)).await.is_err() {
                        break;
                    }
                }
                incoming = socket.recv() => {
                    let text = match incoming {
                        None | Some(Err(_)) | Some(Ok(Message::Close(_))) => break,
                        Some(Ok(Message::Text(t))) => t,
                        Some(Ok(Message::Binary(_))) => {
                            if socket.send(encode(&ServerMessage::error("expected a text frame"))).await.is_err() {
                                break;
                            }
                            continue;
                        }
                        Some(Ok(_)) => continue,
                    };
                    let reply = match serde_json::from_str::<SessionMessage>(&text) {
                        Ok(msg) => live.handle(msg),
                        Err(e) => live::Reply {
                            messages: vec![ServerMessage::error(format!("malformed message: {e}"))],
                            ..Default::default()
                        },
                    };
                    if let Some(result) = reply.tap {
                        state.metrics.lock().expect("metrics lock").record(result);
                    }
                    for cue in reply.scheduled {
                        let tx = cue_tx.clone();
                        timers.push(tokio::spawn(async move {
                            tokio::time::sleep(Duration::from_micros(cue.t)).await;
                            let _ = tx.send(ServerMessage::CompositionCue { cue });
                        }));
                    }
                    let mut failed = false;
                    for m in &reply.messages {
                        if socket.send(encode(m)).await.is_err() {
                            failed = true;
                            break;
                        }
                    }
                    if failed {
                        break;
                    }
                }
            }
        }
    }
    for t in timers {
        t.abort();
    }
    state.metrics.lock().expect("metrics lock").session_closed();
    tracing::debug!(session = id, "closed");
}
