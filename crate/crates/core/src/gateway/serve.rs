//! Websocket server. Each session runs as one task that owns its host, so
//! every input and timer for a session is handled in a single order.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use tokio::sync::mpsc;
use tower_http::services::ServeDir;

use super::{
    JsonlSink, Outgoing, Recipient, ServerConfig, ServerEvent, ServerEventBody, SessionHost,
    PROTOCOL_VERSION,
};
use crate::affinity::UserId;

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

enum Command {
    Frame {
        conn: u64,
        text: String,
        reply: mpsc::UnboundedSender<String>,
    },
    Disconnect {
        conn: u64,
    },
}

struct Server {
    config: ServerConfig,
    sessions: Mutex<HashMap<String, mpsc::UnboundedSender<Command>>>,
    lobby: Mutex<String>,
    next_id: AtomicU64,
}

impl Server {
    /// Opens a new lobby session and makes it the one new clients join.
    fn open_lobby(self: &Arc<Self>) -> std::io::Result<String> {
        let id = format!("s{}-{}", now_ms(), self.next_id.fetch_add(1, Ordering::Relaxed));
        let sink = JsonlSink::create(self.config.log_dir.join(format!("{id}.jsonl")))?;
        let host = SessionHost::new(id.clone(), self.config.session.clone(), Box::new(sink))
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;
        let (tx, rx) = mpsc::unbounded_channel();
        self.sessions.lock().expect("poisoned").insert(id.clone(), tx);
        *self.lobby.lock().expect("poisoned") = id.clone();
        tokio::spawn(run_session(host, rx, Arc::clone(self)));
        tracing::info!(session = %id, "lobby opened");
        Ok(id)
    }
}

async fn run_session(
    mut host: SessionHost,
    mut rx: mpsc::UnboundedReceiver<Command>,
    server: Arc<Server>,
) {
    let mut conns: HashMap<UserId, (u64, mpsc::UnboundedSender<String>)> = HashMap::new();
    let mut announced = false;
    loop {
        let was_lobby = host.in_lobby();
        let wait = host
            .next_deadline()
            .map(|d| Duration::from_millis(d.saturating_sub(now_ms())));
        let result = tokio::select! {
            cmd = rx.recv() => match cmd {
                None => break,
                Some(Command::Disconnect { conn }) => {
                    conns.retain(|_, (c, _)| *c != conn);
                    continue;
                }
                Some(Command::Frame { conn, text, reply }) => {
                    host.handle_text(&text, now_ms()).map(|handled| {
                        if let Some(user) = handled.sender {
                            conns.insert(user, (conn, reply.clone()));
                        }
                        route(&conns, Some(&reply), handled.outgoing);
                    })
                }
            },
            _ = tokio::time::sleep(wait.unwrap_or_default()), if wait.is_some() => {
                host.tick(now_ms()).map(|out| route(&conns, None, out))
            }
        };
        if let Err(e) = result {
            tracing::error!(session = %host.id(), error = %e, "session halted");
            break;
        }
        if was_lobby && !host.in_lobby() {
            if let Err(e) = server.open_lobby() {
                tracing::error!(error = %e, "cannot open the next lobby");
            }
        }
        if host.is_finished() && !announced {
            announced = true;
            tracing::info!(session = %host.id(), "session finished");
        }
    }
}

fn route(
    conns: &HashMap<UserId, (u64, mpsc::UnboundedSender<String>)>,
    sender: Option<&mpsc::UnboundedSender<String>>,
    outgoing: Vec<Outgoing>,
) {
    for Outgoing { to, event } in outgoing {
        let target = match &to {
            Recipient::Sender => sender,
            Recipient::User(u) => conns.get(u).map(|(_, tx)| tx),
        };
        if let Some(tx) = target {
            let _ = tx.send(event.to_json());
        }
    }
}

async fn lobby(State(server): State<Arc<Server>>) -> impl IntoResponse {
    let session = server.lobby.lock().expect("poisoned").clone();
    Json(serde_json::json!({ "session": session, "v": PROTOCOL_VERSION }))
}

async fn ws(State(server): State<Arc<Server>>, upgrade: WebSocketUpgrade) -> impl IntoResponse {
    upgrade.on_upgrade(move |socket| connection(server, socket))
}

#[derive(serde::Deserialize)]
struct Envelope {
    session: String,
}

async fn connection(server: Arc<Server>, mut socket: WebSocket) {
    let conn = server.next_id.fetch_add(1, Ordering::Relaxed);
    let (tx, mut rx) = mpsc::unbounded_channel::<String>();
    let mut joined: Vec<mpsc::UnboundedSender<Command>> = Vec::new();
    loop {
        tokio::select! {
            frame = socket.recv() => {
                let Some(Ok(frame)) = frame else { break };
                let text = match frame {
                    Message::Text(t) => t.to_string(),
                    Message::Close(_) => break,
                    _ => continue,
                };
                let session = serde_json::from_str::<Envelope>(&text).map(|e| e.session).ok();
                let queue = session
                    .as_ref()
                    .and_then(|s| server.sessions.lock().expect("poisoned").get(s).cloned());
                match queue {
                    Some(q) => {
                        if !joined.iter().any(|j| j.same_channel(&q)) {
                            joined.push(q.clone());
                        }
                        let _ = q.send(Command::Frame { conn, text, reply: tx.clone() });
                    }
                    None => {
                        let event = ServerEvent {
                            v: PROTOCOL_VERSION,
                            session: session.unwrap_or_default(),
                            server_order: 0,
                            body: ServerEventBody::Error {
                                code: "unknown_session".into(),
                                message: "no such session".into(),
                                action: None,
                            },
                        };
                        if socket.send(Message::Text(event.to_json().into())).await.is_err() {
                            break;
                        }
                    }
                }
            }
            out = rx.recv() => {
                let Some(out) = out else { break };
                if socket.send(Message::Text(out.into())).await.is_err() {
                    break;
                }
            }
        }
    }
    for q in joined {
        let _ = q.send(Command::Disconnect { conn });
    }
}

/// Builds the HTTP application and opens the first lobby.
pub fn app(config: ServerConfig) -> std::io::Result<Router> {
    let static_dir = config.static_dir.clone();
    let server = Arc::new(Server {
        config,
        sessions: Mutex::new(HashMap::new()),
        lobby: Mutex::new(String::new()),
        next_id: AtomicU64::new(1),
    });
    server.open_lobby()?;
    let router = Router::new()
        .route("/ws", get(ws))
        .route("/api/lobby", get(lobby))
        .with_state(server);
    Ok(match static_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router,
    })
}

/// Serves until the process is stopped.
pub async fn serve(config: ServerConfig) -> std::io::Result<()> {
    let addr: SocketAddr = config
        .bind
        .parse()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;
    let router = app(config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router).await
}
