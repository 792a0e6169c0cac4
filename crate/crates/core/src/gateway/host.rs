//! One hosted session: lobby, engine, log persistence and per-participant
//! event streams.

use std::collections::BTreeMap;
use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::protocol::{
    CandidateStory, ClientAction, ClientMessage, RosterStatus, ServerEvent, ServerEventBody,
    PROTOCOL_VERSION,
};
use super::sink::{LogSink, NullSink};
use crate::affinity::UserId;
use crate::session::{
    build_profile_view, gate_batch, Event, FinalReport, GateDecision, Input, LogRecord, Phase,
    Registration, RosterEntry, SessionConfig, SessionEngine, SessionError, SessionState,
    TeamText,
};

const MAX_USERNAME_CHARS: usize = 64;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("log persistence failed: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Session(#[from] SessionError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Recipient {
    /// A participant's ordered stream.
    User(UserId),
    /// The connection that sent the message being handled.
    Sender,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing {
    pub to: Recipient,
    pub event: ServerEvent,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Handled {
    /// The authenticated sender, once known.
    pub sender: Option<UserId>,
    pub outgoing: Vec<Outgoing>,
}

#[derive(Debug)]
enum Stage {
    Lobby(Vec<Registration>),
    Running(Box<SessionEngine>),
    Aborted(SessionError),
}

pub struct SessionHost {
    id: String,
    config: SessionConfig,
    stage: Stage,
    tokens: BTreeMap<String, UserId>,
    usernames: BTreeMap<UserId, String>,
    records: Vec<LogRecord>,
    sink: Box<dyn LogSink>,
    streams: BTreeMap<UserId, Vec<ServerEvent>>,
    token_rng: ChaCha8Rng,
    rejections: usize,
}

fn error_body(code: &str, message: impl Into<String>, action: Option<&str>) -> ServerEventBody {
    ServerEventBody::Error {
        code: code.to_owned(),
        message: message.into(),
        action: action.map(str::to_owned),
    }
}

impl SessionHost {
    pub fn new(
        id: impl Into<String>,
        config: SessionConfig,
        sink: Box<dyn LogSink>,
    ) -> Result<Self, SessionError> {
        config.validate()?;
        Ok(SessionHost {
            id: id.into(),
            config,
            stage: Stage::Lobby(Vec::new()),
            tokens: BTreeMap::new(),
            usernames: BTreeMap::new(),
            records: Vec::new(),
            sink,
            streams: BTreeMap::new(),
            token_rng: ChaCha8Rng::from_os_rng(),
            rejections: 0,
        })
    }

    /// A host that persists nothing beyond its in-memory log.
    pub fn in_memory(id: impl Into<String>, config: SessionConfig) -> Result<Self, SessionError> {
        Self::new(id, config, Box::new(NullSink))
    }

    /// Makes issued credentials reproducible.
    pub fn with_token_seed(mut self, seed: u64) -> Self {
        self.token_rng = ChaCha8Rng::seed_from_u64(seed);
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn engine(&self) -> Option<&SessionEngine> {
        match &self.stage {
            Stage::Running(e) => Some(e),
            _ => None,
        }
    }

    pub fn state(&self) -> Option<&SessionState> {
        self.engine().map(SessionEngine::state)
    }

    pub fn in_lobby(&self) -> bool {
        matches!(self.stage, Stage::Lobby(_))
    }

    pub fn aborted(&self) -> Option<&SessionError> {
        match &self.stage {
            Stage::Aborted(e) => Some(e),
            _ => None,
        }
    }

    pub fn is_finished(&self) -> bool {
        match &self.stage {
            Stage::Running(e) => e.is_finalized(),
            Stage::Aborted(_) => true,
            Stage::Lobby(_) => false,
        }
    }

    pub fn final_report(&self) -> Option<FinalReport> {
        self.engine()?.final_report()
    }

    /// Inputs refused by the gateway or the engine so far.
    pub fn rejection_count(&self) -> usize {
        self.rejections
    }

    /// Every frame delivered to `user`, in server order.
    pub fn stream(&self, user: &UserId) -> &[ServerEvent] {
        self.streams.get(user).map_or(&[], Vec::as_slice)
    }

    pub fn next_deadline(&self) -> Option<u64> {
        match &self.stage {
            Stage::Lobby(regs) => regs.first().map(|r| r.at_ms + self.config.max_wait_ms),
            Stage::Running(e) => e.next_deadline(),
            Stage::Aborted(_) => None,
        }
    }

    /// Fires due timers: batch gating in the lobby, phase timers afterwards.
    pub fn tick(&mut self, now_ms: u64) -> Result<Vec<Outgoing>, GatewayError> {
        match &mut self.stage {
            Stage::Lobby(regs) => match gate_batch(regs, &self.config, now_ms) {
                GateDecision::Waiting { .. } => Ok(Vec::new()),
                GateDecision::Admit { admitted, excluded } => {
                    let (engine, records) = SessionEngine::start(
                        self.id.clone(),
                        self.config.clone(),
                        admitted,
                        excluded,
                        now_ms,
                    )?;
                    self.stage = Stage::Running(Box::new(engine));
                    self.commit(records)
                }
                GateDecision::Abort(error) => {
                    let users: Vec<UserId> = regs.iter().map(|r| r.user.clone()).collect();
                    let count = users.len();
                    let message = error.to_string();
                    self.stage = Stage::Aborted(error);
                    let mut out = Vec::new();
                    for u in users {
                        let roster = self.roster_update(RosterStatus::Aborted, count, Vec::new());
                        out.push(self.deliver(&u, roster));
                        out.push(self.deliver(&u, error_body("batch_aborted", &message, None)));
                    }
                    Ok(out)
                }
            },
            Stage::Running(engine) => {
                let records = engine.tick(now_ms);
                self.commit(records)
            }
            Stage::Aborted(_) => Ok(Vec::new()),
        }
    }

    /// Closes the current phase on the host's behalf.
    pub fn advance_phase(&mut self, now_ms: u64) -> Result<Vec<Outgoing>, GatewayError> {
        match &mut self.stage {
            Stage::Running(engine) => {
                let records = engine.advance_phase(now_ms)?;
                self.commit(records)
            }
            _ => Err(SessionError::Lifecycle("the session is not running".into()).into()),
        }
    }

    /// Parses and handles one text frame.
    pub fn handle_text(&mut self, text: &str, now_ms: u64) -> Result<Handled, GatewayError> {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(msg) => self.handle(msg, now_ms),
            Err(e) => {
                self.rejections += 1;
                Ok(Handled {
                    sender: None,
                    outgoing: vec![self.to_sender(error_body("malformed", e.to_string(), None))],
                })
            }
        }
    }

    pub fn handle(&mut self, msg: ClientMessage, now_ms: u64) -> Result<Handled, GatewayError> {
        let action = msg.action.name();
        if msg.v != PROTOCOL_VERSION {
            return Ok(self.refuse_sender(
                "unsupported_version",
                format!("protocol version {} is not supported", msg.v),
                action,
            ));
        }
        if msg.session != self.id {
            return Ok(self.refuse_sender(
                "unknown_session",
                format!("no session {}", msg.session),
                action,
            ));
        }
        let mut out = self.tick(now_ms)?;

        if let ClientAction::Register { username } = &msg.action {
            return self.register(username, now_ms, out);
        }
        let Some(user) = msg.token.as_ref().and_then(|t| self.tokens.get(t)).cloned() else {
            let mut handled = self.refuse_sender("unauthorized", "unknown or missing token", action);
            out.append(&mut handled.outgoing);
            handled.outgoing = out;
            return Ok(handled);
        };
        match msg.action {
            ClientAction::Resume { last_server_order } => {
                out.extend(
                    self.stream(&user)
                        .iter()
                        .filter(|e| e.server_order > last_server_order)
                        .cloned()
                        .map(|event| Outgoing {
                            to: Recipient::Sender,
                            event,
                        }),
                );
            }
            action => match &mut self.stage {
                Stage::Lobby(regs) => {
                    if let ClientAction::Leave = action {
                        regs.retain(|r| r.user != user);
                        self.tokens.retain(|_, u| *u != user);
                        let ack = ServerEventBody::Ack {
                            action: "leave".into(),
                            log_seq: 0,
                        };
                        out.push(self.deliver(&user, ack));
                        out.extend(self.lobby_roster_updates());
                    } else {
                        self.rejections += 1;
                        let body = error_body("stale_phase", "the session has not started", Some(action.name()));
                        out.push(self.deliver(&user, body));
                    }
                }
                Stage::Aborted(e) => {
                    self.rejections += 1;
                    let body = error_body("batch_aborted", e.to_string(), Some(action.name()));
                    out.push(self.deliver(&user, body));
                }
                Stage::Running(engine) => {
                    let name = action.name();
                    let input = to_input(user.clone(), action);
                    match engine.apply(input, now_ms) {
                        Ok(records) => out.extend(self.commit(records)?),
                        Err(rejection) => {
                            self.rejections += 1;
                            match rejection.record {
                                Some(record) => out.extend(self.commit(vec![record])?),
                                None => {
                                    let body = error_body(
                                        rejection.error.code(),
                                        rejection.error.to_string(),
                                        Some(name),
                                    );
                                    out.push(self.deliver(&user, body));
                                }
                            }
                        }
                    }
                }
            },
        }
        Ok(Handled {
            sender: Some(user),
            outgoing: out,
        })
    }

    fn register(
        &mut self,
        username: &str,
        now_ms: u64,
        mut out: Vec<Outgoing>,
    ) -> Result<Handled, GatewayError> {
        let Stage::Lobby(regs) = &mut self.stage else {
            let mut h = self.refuse_sender("lobby_closed", "registration is closed", "register");
            h.outgoing.splice(0..0, out);
            return Ok(h);
        };
        let username = username.trim();
        let problem = if username.is_empty() {
            Some("username must not be empty")
        } else if username.chars().count() > MAX_USERNAME_CHARS {
            Some("username is too long")
        } else if self.usernames.values().any(|u| u == username) {
            Some("username is taken")
        } else {
            None
        };
        if let Some(problem) = problem {
            let mut h = self.refuse_sender("validation", problem, "register");
            h.outgoing.splice(0..0, out);
            return Ok(h);
        }
        let user = UserId::new(format!("p{:02}", self.usernames.len() + 1));
        regs.push(Registration {
            user: user.clone(),
            username: username.to_owned(),
            at_ms: now_ms,
        });
        let token = format!("{:032x}", self.token_rng.random::<u128>());
        self.tokens.insert(token.clone(), user.clone());
        self.usernames.insert(user.clone(), username.to_owned());
        let registered = ServerEventBody::Registered {
            user: user.clone(),
            username: username.to_owned(),
            token,
        };
        out.push(self.deliver(&user, registered));
        out.extend(self.lobby_roster_updates());
        out.extend(self.tick(now_ms)?);
        Ok(Handled {
            sender: Some(user),
            outgoing: out,
        })
    }

    fn refuse_sender(&mut self, code: &str, message: impl Into<String>, action: &str) -> Handled {
        self.rejections += 1;
        Handled {
            sender: None,
            outgoing: vec![self.to_sender(error_body(code, message, Some(action)))],
        }
    }

    fn to_sender(&self, body: ServerEventBody) -> Outgoing {
        Outgoing {
            to: Recipient::Sender,
            event: ServerEvent {
                v: PROTOCOL_VERSION,
                session: self.id.clone(),
                server_order: 0,
                body,
            },
        }
    }

    fn deliver(&mut self, user: &UserId, body: ServerEventBody) -> Outgoing {
        let stream = self.streams.entry(user.clone()).or_default();
        let event = ServerEvent {
            v: PROTOCOL_VERSION,
            session: self.id.clone(),
            server_order: stream.len() as u64 + 1,
            body,
        };
        stream.push(event.clone());
        Outgoing {
            to: Recipient::User(user.clone()),
            event,
        }
    }

    fn roster_update(
        &self,
        status: RosterStatus,
        registered: usize,
        roster: Vec<RosterEntry>,
    ) -> ServerEventBody {
        ServerEventBody::RosterUpdate {
            status,
            registered,
            batch_min: self.config.batch_min,
            batch_max: self.config.batch_max,
            roster,
        }
    }

    fn lobby_roster_updates(&mut self) -> Vec<Outgoing> {
        let Stage::Lobby(regs) = &self.stage else {
            return Vec::new();
        };
        let roster: Vec<RosterEntry> = regs
            .iter()
            .map(|r| RosterEntry {
                user: r.user.clone(),
                username: r.username.clone(),
            })
            .collect();
        let body = self.roster_update(RosterStatus::Waiting, roster.len(), roster.clone());
        roster
            .iter()
            .map(|e| self.deliver(&e.user, body.clone()))
            .collect()
    }

    /// Persists `records`, then turns them into deliveries.
    fn commit(&mut self, records: Vec<LogRecord>) -> Result<Vec<Outgoing>, GatewayError> {
        if records.is_empty() {
            return Ok(Vec::new());
        }
        self.sink.append(&records)?;
        let mut out = Vec::new();
        let mut last_counts = Vec::new();
        for record in &records {
            for (user, body) in self.deliveries(record, &mut last_counts) {
                out.push(self.deliver(&user, body));
            }
        }
        self.records.extend(records);
        Ok(out)
    }

    fn deliveries(
        &self,
        record: &LogRecord,
        last_counts: &mut Vec<u32>,
    ) -> Vec<(UserId, ServerEventBody)> {
        let Some(s) = self.state() else {
            return Vec::new();
        };
        let active: Vec<UserId> = s.active_users().into_iter().collect();
        let all = |body: ServerEventBody| -> Vec<(UserId, ServerEventBody)> {
            active.iter().map(|u| (u.clone(), body.clone())).collect()
        };
        let ack = |user: &UserId| {
            vec![(
                user.clone(),
                ServerEventBody::Ack {
                    action: record
                        .event
                        .as_input()
                        .map_or("", |i| i.action())
                        .to_owned(),
                    log_seq: record.seq,
                },
            )]
        };
        let round = s.round_state(record.round);
        match &record.event {
            Event::SessionStarted { roster, excluded, .. } => {
                let registered = roster.len() + excluded.len();
                let mut v: Vec<_> = roster
                    .iter()
                    .map(|e| {
                        let body = self.roster_update(RosterStatus::Admitted, registered, roster.clone());
                        (e.user.clone(), body)
                    })
                    .collect();
                v.extend(excluded.iter().map(|e| {
                    let body = self.roster_update(RosterStatus::Excluded, registered, Vec::new());
                    (e.user.clone(), body)
                }));
                v
            }
            Event::PhaseEntered { phase, deadline_ms } => {
                let mut v = all(ServerEventBody::PhaseEntered {
                    phase: *phase,
                    round: record.round,
                    rounds: s.config.rounds,
                    deadline_ms: *deadline_ms,
                    main_story: matches!(phase, Phase::Collaboration | Phase::Leaderboard)
                        .then(|| s.main_story.clone()),
                });
                match phase {
                    Phase::TeammateSelection => {
                        for u in &active {
                            let views = active
                                .iter()
                                .filter(|t| *t != u)
                                .filter_map(|t| build_profile_view(s, u, t).ok())
                                .collect();
                            v.push((
                                u.clone(),
                                ServerEventBody::ProfileViews {
                                    round: record.round,
                                    previous_teammates: s.previous_teammates(u),
                                    views,
                                },
                            ));
                        }
                    }
                    Phase::StoryVoting => {
                        if let Some(r) = round {
                            for u in &active {
                                let own = r.team_of(u);
                                let stories = r
                                    .shared_texts
                                    .iter()
                                    .enumerate()
                                    .filter(|(t, _)| Some(*t as u32) != own)
                                    .map(|(t, text)| CandidateStory {
                                        team: t as u32,
                                        text: text.text.clone(),
                                    })
                                    .collect();
                                v.push((
                                    u.clone(),
                                    ServerEventBody::CandidateStories {
                                        round: record.round,
                                        stories,
                                    },
                                ));
                            }
                        }
                    }
                    _ => {}
                }
                v
            }
            Event::Reminder { remaining_ms } => all(ServerEventBody::Reminder {
                remaining_ms: *remaining_ms,
            }),
            Event::TeamsFormed { assignment, .. } => {
                let mut v = Vec::new();
                for (t, members) in assignment.teams.iter().enumerate() {
                    for m in members.iter().filter(|m| s.is_active(m)) {
                        v.push((
                            m.clone(),
                            ServerEventBody::TeamsFormed {
                                round: record.round,
                                team: t as u32,
                                members: members.clone(),
                            },
                        ));
                        v.push((
                            m.clone(),
                            ServerEventBody::TextState {
                                team: t as u32,
                                version: 0,
                                text: String::new(),
                                op: None,
                            },
                        ));
                    }
                }
                v
            }
            Event::EditApplied { op, .. } => {
                let mut v = ack(&op.author);
                if let Some(r) = round {
                    let shared = &r.shared_texts[op.team as usize];
                    let version = shared
                        .ops
                        .iter()
                        .position(|o| o.server_order == op.server_order)
                        .map_or(shared.version(), |i| i + 1);
                    let text = if version == shared.version() {
                        shared.text.clone()
                    } else {
                        TeamText::replay(&shared.ops[..version]).text
                    };
                    let body = ServerEventBody::TextState {
                        team: op.team,
                        version,
                        text,
                        op: Some(op.clone()),
                    };
                    v.extend(self.team_members(s, record.round, op.team, body));
                }
                v
            }
            Event::ChatPosted { message } => {
                let mut v = ack(&message.author);
                let body = ServerEventBody::ChatDelivered {
                    message: message.clone(),
                };
                v.extend(self.team_members(s, record.round, message.team, body));
                v
            }
            Event::VotesTallied { counts, .. } => {
                *last_counts = counts.clone();
                Vec::new()
            }
            Event::StoryAppended { team, fragment, .. } => all(ServerEventBody::WinnerAnnounced {
                round: record.round,
                team: *team,
                members: round
                    .and_then(|r| r.team_members(*team))
                    .map(<[UserId]>::to_vec)
                    .unwrap_or_default(),
                counts: last_counts.clone(),
                fragment: fragment.clone(),
                main_story: s.main_story.clone(),
            }),
            Event::SessionFinalized {
                leaderboard,
                final_story,
            } => s
                .profiles
                .keys()
                .map(|u| {
                    (
                        u.clone(),
                        ServerEventBody::Leaderboard {
                            entries: leaderboard.clone(),
                            final_story: final_story.clone(),
                        },
                    )
                })
                .collect(),
            Event::Rejected {
                input,
                code,
                reason,
            } => {
                let user = input.user();
                if self.usernames.contains_key(user) {
                    vec![(user.clone(), error_body(code, reason.clone(), Some(input.action())))]
                } else {
                    Vec::new()
                }
            }
            Event::DemographicsSubmitted { user, .. }
            | Event::SampleSubmitted { user, .. }
            | Event::QuestionnaireSubmitted { user, .. }
            | Event::UserDeparted { user } => ack(user),
            Event::BallotSubmitted { ballot } => ack(&ballot.voter),
            Event::RatingSubmitted { rating, .. } => ack(&rating.rater),
            Event::StoryVoteSubmitted { voter, .. } => ack(voter),
            Event::PhaseClosed { .. } | Event::BallotsClosed { .. } | Event::RewardsSettled { .. } => {
                Vec::new()
            }
        }
    }

    fn team_members(
        &self,
        s: &SessionState,
        round: u32,
        team: u32,
        body: ServerEventBody,
    ) -> Vec<(UserId, ServerEventBody)> {
        s.round_state(round)
            .and_then(|r| r.team_members(team))
            .unwrap_or_default()
            .iter()
            .filter(|m| s.is_active(m))
            .map(|m| (m.clone(), body.clone()))
            .collect()
    }
}

/// Maps an authenticated client action onto an engine input.
fn to_input(user: UserId, action: ClientAction) -> Input {
    match action {
        ClientAction::SubmitQuestionnaire { answers } => Input::SubmitQuestionnaire { user, answers },
        ClientAction::SubmitSample { text } => Input::SubmitSample { user, text },
        ClientAction::SubmitBallot {
            previous_teammate,
            stay_with_previous,
            chosen,
        } => Input::SubmitBallot {
            user,
            previous_teammate,
            stay_with_previous,
            chosen,
        },
        ClientAction::EditOp { team, edit } => Input::EditOp { user, team, edit },
        ClientAction::Chat { team, text } => Input::Chat { user, team, text },
        ClientAction::SubmitRating(rating) => Input::SubmitRating { user, rating },
        ClientAction::SubmitStoryVote { team } => Input::SubmitStoryVote { user, team },
        ClientAction::Leave => Input::Depart { user },
        ClientAction::Register { .. } | ClientAction::Resume { .. } => {
            unreachable!("handled before reaching the engine")
        }
    }
}
