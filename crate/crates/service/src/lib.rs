//! HTTP and WebSocket front end for JCave sessions.
//!
//! Routes:
//! - `GET /session`: WebSocket, one game session per connection, text
//!   frames carrying the JSON messages of [`jcave_core::protocol`].
//! - `GET /health`: service name, version and protocol version.
//! - everything else: static files from the UI bundle directory.

use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use jcave_core::profile::ProfileStore;
use jcave_core::protocol::{Connection, ServerMessage, PROTOCOL_VERSION};
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

const PLACEHOLDER_INDEX: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>JCave</title></head>
<body><h1>JCave session service</h1>
<p>No UI bundle found. Build the UI and point <code>JCAVE_UI_DIR</code> (or <code>--ui-dir</code>) at it.</p>
<p>Sessions: <code>ws://&lt;host&gt;/session</code>. Health: <a href=\"/health\">/health</a>.</p>
</body></html>
";

#[derive(Clone, Debug, Default)]
pub struct ServiceConfig {
    pub store: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
}

#[derive(Clone)]
struct AppState {
    store: Option<ProfileStore>,
}

pub fn router(config: &ServiceConfig) -> Router {
    let state = AppState { store: config.store.as_ref().map(ProfileStore::open) };
    let app = Router::new().route("/session", get(session)).route("/health", get(health)).with_state(state);
    match &config.ui_dir {
        Some(dir) if dir.is_dir() => app.fallback_service(ServeDir::new(dir)),
        _ => app.route("/", get(|| async { Html(PLACEHOLDER_INDEX) })),
    }
}

#[derive(Debug)]
pub struct BindError {
    pub addr: String,
    pub source: io::Error,
}

impl std::fmt::Display for BindError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.source.kind() {
            io::ErrorKind::AddrInUse => write!(f, "cannot listen on {}: address already in use", self.addr),
            _ => write!(f, "cannot listen on {}: {}", self.addr, self.source),
        }
    }
}

impl std::error::Error for BindError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

pub async fn bind(addr: &str) -> Result<TcpListener, BindError> {
    TcpListener::bind(addr).await.map_err(|source| BindError { addr: addr.to_string(), source })
}

pub async fn serve(listener: TcpListener, config: ServiceConfig) -> io::Result<()> {
    axum::serve(listener, router(&config)).await
}

/// Binds on an OS-chosen local port and serves in the background.
pub async fn spawn_local(config: ServiceConfig) -> io::Result<SocketAddr> {
    let listener = TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    tokio::spawn(async move {
        if let Err(e) = serve(listener, config).await {
            tracing::error!("service stopped: {e}");
        }
    });
    Ok(addr)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({
        "service": "jcave",
        "version": VERSION,
        "protocolVersion": PROTOCOL_VERSION,
    }))
}

async fn session(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| run_connection(socket, state.store)).into_response()
}

async fn run_connection(mut socket: WebSocket, store: Option<ProfileStore>) {
    let mut conn = Connection::new(store);
    while let Some(incoming) = socket.recv().await {
        let reply = match incoming {
            Ok(Message::Text(text)) => conn.handle_text(text.as_str()),
            Ok(Message::Binary(_)) => {
                let err =
                    ServerMessage::error(jcave_core::protocol::codes::DECODE, "binary messages are not supported");
                jcave_core::protocol::Reply { messages: vec![err], close: false }
            }
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => continue,
        };
        for msg in &reply.messages {
            if socket.send(Message::Text(msg.to_json().into())).await.is_err() {
                conn.disconnect();
                return;
            }
        }
        if reply.close {
            let _ = socket.send(Message::Close(None)).await;
            return;
        }
    }
    conn.disconnect();
    tracing::debug!("session connection closed");
}
