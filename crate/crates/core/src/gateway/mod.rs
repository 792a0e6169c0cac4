//! Network boundary: wire protocol, session hosting, log persistence,
//! replay and the websocket server.

mod config;
mod host;
mod protocol;
mod replay;
pub mod serve;
mod sink;

use std::collections::BTreeMap;

pub use config::{ConfigError, ServerConfig, ENV_BIND, ENV_LOG_DIR};
pub use host::{GatewayError, Handled, Outgoing, Recipient, SessionHost};
pub use protocol::{
    CandidateStory, ClientAction, ClientMessage, RosterStatus, ServerEvent, ServerEventBody,
    PROTOCOL_VERSION,
};
pub use replay::{replay_event_log, Divergence, ReplayReport};
pub use sink::{JsonlSink, LogSink, NullSink};

/// Routes frames to the hosted sessions they name.
#[derive(Default)]
pub struct Gateway {
    sessions: BTreeMap<String, SessionHost>,
}

#[derive(serde::Deserialize)]
struct Envelope {
    session: String,
}

impl Gateway {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn open(&mut self, host: SessionHost) {
        self.sessions.insert(host.id().to_owned(), host);
    }

    pub fn host(&self, session: &str) -> Option<&SessionHost> {
        self.sessions.get(session)
    }

    pub fn host_mut(&mut self, session: &str) -> Option<&mut SessionHost> {
        self.sessions.get_mut(session)
    }

    pub fn handle_text(&mut self, text: &str, now_ms: u64) -> Result<Handled, GatewayError> {
        let session = serde_json::from_str::<Envelope>(text).map(|e| e.session);
        match session.as_deref().ok().and_then(|s| self.sessions.get_mut(s)) {
            Some(host) => host.handle_text(text, now_ms),
            None => Ok(Handled {
                sender: None,
                outgoing: vec![Outgoing {
                    to: Recipient::Sender,
                    event: ServerEvent {
                        v: PROTOCOL_VERSION,
                        session: session.unwrap_or_default(),
                        server_order: 0,
                        body: ServerEventBody::Error {
                            code: "unknown_session".into(),
                            message: "no such session".into(),
                            action: None,
                        },
                    },
                }],
            }),
        }
    }

    /// Fires due timers in every session.
    pub fn tick(&mut self, now_ms: u64) -> Result<Vec<(String, Outgoing)>, GatewayError> {
        let mut out = Vec::new();
        for (id, host) in &mut self.sessions {
            out.extend(host.tick(now_ms)?.into_iter().map(|o| (id.clone(), o)));
        }
        Ok(out)
    }
}
