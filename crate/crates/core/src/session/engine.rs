//! The per-session state machine.
//!
//! Every mutation goes through [`SessionEngine::apply`], [`SessionEngine::tick`]
//! or [`SessionEngine::advance_phase`], and each returns the log records it
//! produced. The host must call `tick` with the current time before applying
//! an input so that expired phases close first.

use std::collections::{BTreeMap, BTreeSet};

use super::rules::{self, Formation};
use super::{
    CloseReason, Event, Input, LogRecord, ParticipantProfile, PeerRating, Phase, RatingForm,
    RosterEntry, RoundState, SessionConfig, SessionError, SessionState, TeamId, TeamText,
    LOG_VERSION,
};
use crate::affinity::{encode_ballot, PreferenceBallot, UserId};
use crate::session::{ChatMessage, EditOperation, FormationMethod};
use crate::seed;

/// An input the engine refused. `record` is the `rejected` log entry, absent
/// once the session is finalized and the log is closed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub error: SessionError,
    pub record: Option<LogRecord>,
}

/// Summary produced when a session finalizes.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FinalReport {
    pub session: String,
    pub final_story: String,
    pub leaderboard: Vec<super::LeaderboardEntry>,
    pub records: u64,
}

#[derive(Debug, Clone)]
pub struct SessionEngine {
    state: SessionState,
}

type Out = Vec<LogRecord>;

impl SessionEngine {
    /// Opens a session for an admitted roster and enters the first phase.
    pub fn start(
        session_id: impl Into<String>,
        config: SessionConfig,
        roster: Vec<RosterEntry>,
        excluded: Vec<RosterEntry>,
        now_ms: u64,
    ) -> Result<(Self, Vec<LogRecord>), SessionError> {
        config.validate()?;
        if roster.len() < config.team_size {
            return Err(SessionError::Config(format!(
                "a roster of {} cannot fill a team of {}",
                roster.len(),
                config.team_size
            )));
        }
        let mut profiles = BTreeMap::new();
        for entry in &roster {
            let profile = ParticipantProfile {
                user: entry.user.clone(),
                username: entry.username.clone(),
                demographics: BTreeMap::new(),
                writing_sample: None,
                ratings_received: Vec::new(),
                wins: 0,
                reward_balance: config.base_reward,
            };
            if profiles.insert(entry.user.clone(), profile).is_some() {
                return Err(SessionError::Config(format!("duplicate roster id {}", entry.user)));
            }
        }
        let state = SessionState {
            session_id: session_id.into(),
            main_story: config.seed_story.clone(),
            config: config.clone(),
            roster: roster.clone(),
            excluded: excluded.clone(),
            profiles,
            departed: BTreeSet::new(),
            phase: Phase::Instructions,
            phase_entered_ms: now_ms,
            deadline_ms: None,
            reminder_due_ms: None,
            phase_submissions: BTreeSet::new(),
            round: 1,
            rounds: vec![RoundState::new(1)],
            fragments: Vec::new(),
            fixed_assignment: None,
            final_answers: BTreeMap::new(),
            settled_rounds: BTreeSet::new(),
            leaderboard: Vec::new(),
            next_seq: 0,
            finalized: false,
        };
        let mut engine = SessionEngine { state };
        let mut out = Vec::new();
        engine.emit(
            &mut out,
            now_ms,
            Event::SessionStarted {
                config,
                roster,
                excluded,
            },
        );
        engine.enter(&mut out, Phase::Instructions, now_ms);
        Ok((engine, out))
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn into_state(self) -> SessionState {
        self.state
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    pub fn is_finalized(&self) -> bool {
        self.state.finalized
    }

    /// The earliest pending timer: the wrap-up reminder or the phase deadline.
    pub fn next_deadline(&self) -> Option<u64> {
        match (self.state.reminder_due_ms, self.state.deadline_ms) {
            (Some(r), Some(d)) => Some(r.min(d)),
            (r, d) => r.or(d),
        }
    }

    pub fn final_report(&self) -> Option<FinalReport> {
        self.state.finalized.then(|| FinalReport {
            session: self.state.session_id.clone(),
            final_story: self.state.main_story.clone(),
            leaderboard: self.state.leaderboard.clone(),
            records: self.state.next_seq,
        })
    }

    /// Fires every timer due at or before `now_ms`, in time order.
    pub fn tick(&mut self, now_ms: u64) -> Vec<LogRecord> {
        let mut out = Vec::new();
        while !self.state.finalized {
            if let Some(due) = self.state.reminder_due_ms.filter(|&r| r <= now_ms) {
                self.state.reminder_due_ms = None;
                let remaining_ms = self.state.deadline_ms.map_or(0, |d| d.saturating_sub(due));
                self.emit(&mut out, due, Event::Reminder { remaining_ms });
                continue;
            }
            match self.state.deadline_ms {
                Some(d) if d <= now_ms => self.close_phase(&mut out, CloseReason::Deadline, d),
                _ => break,
            }
        }
        out
    }

    /// Closes the current phase immediately.
    pub fn advance_phase(&mut self, now_ms: u64) -> Result<Vec<LogRecord>, SessionError> {
        if self.state.finalized {
            return Err(SessionError::Lifecycle("the session is finalized".into()));
        }
        let mut out = Vec::new();
        self.close_phase(&mut out, CloseReason::Forced, now_ms);
        Ok(out)
    }

    /// Closes the final questionnaire and finalizes the session.
    pub fn finalize(&mut self, now_ms: u64) -> Result<Vec<LogRecord>, SessionError> {
        if self.state.finalized {
            return Err(SessionError::Lifecycle("the session is already finalized".into()));
        }
        if self.state.phase != Phase::FinalQuestionnaire {
            return Err(SessionError::Lifecycle(format!(
                "cannot finalize during {} of round {}",
                self.state.phase, self.state.round
            )));
        }
        self.advance_phase(now_ms)
    }

    pub fn apply(&mut self, input: Input, now_ms: u64) -> Result<Vec<LogRecord>, Rejection> {
        if self.state.finalized {
            return Err(Rejection {
                error: SessionError::Lifecycle("the session is finalized".into()),
                record: None,
            });
        }
        let mut out = Vec::new();
        match self.accept(&mut out, &input, now_ms) {
            Ok(()) => {
                if self.phase_complete() {
                    self.close_phase(&mut out, CloseReason::Complete, now_ms);
                }
                Ok(out)
            }
            Err(error) => {
                self.emit(
                    &mut out,
                    now_ms,
                    Event::Rejected {
                        input,
                        code: error.code().to_owned(),
                        reason: error.to_string(),
                    },
                );
                Err(Rejection {
                    error,
                    record: out.pop(),
                })
            }
        }
    }

    fn emit(&mut self, out: &mut Out, at_ms: u64, event: Event) {
        let s = &mut self.state;
        out.push(LogRecord {
            v: LOG_VERSION,
            seq: s.next_seq,
            session: s.session_id.clone(),
            round: s.round,
            phase: s.phase,
            at_ms,
            event,
        });
        s.next_seq += 1;
    }

    fn expect_phase(&self, input: &Input, phases: &[Phase]) -> Result<(), SessionError> {
        if phases.contains(&self.state.phase) {
            Ok(())
        } else {
            Err(SessionError::StalePhase {
                action: input.action(),
                phase: self.state.phase,
            })
        }
    }

    fn accept(&mut self, out: &mut Out, input: &Input, now: u64) -> Result<(), SessionError> {
        let user = input.user();
        if !self.state.is_member(user) {
            return Err(SessionError::NotOnRoster(user.clone()));
        }
        if self.state.departed.contains(user) {
            return Err(SessionError::Departed(user.clone()));
        }
        match input {
            Input::SubmitQuestionnaire { user, answers } => {
                self.expect_phase(input, &[Phase::Demographics, Phase::FinalQuestionnaire])?;
                self.single_shot(user)?;
                let event = if self.state.phase == Phase::Demographics {
                    self.profile_mut(user).demographics = answers.clone();
                    Event::DemographicsSubmitted {
                        user: user.clone(),
                        answers: answers.clone(),
                    }
                } else {
                    self.state.final_answers.insert(user.clone(), answers.clone());
                    Event::QuestionnaireSubmitted {
                        user: user.clone(),
                        answers: answers.clone(),
                    }
                };
                self.state.phase_submissions.insert(user.clone());
                self.emit(out, now, event);
            }
            Input::SubmitSample { user, text } => {
                self.expect_phase(input, &[Phase::WritingSample])?;
                self.single_shot(user)?;
                if text.trim().is_empty() {
                    return Err(SessionError::Validation("empty writing sample".into()));
                }
                self.profile_mut(user).writing_sample = Some(text.clone());
                self.state.phase_submissions.insert(user.clone());
                self.emit(
                    out,
                    now,
                    Event::SampleSubmitted {
                        user: user.clone(),
                        text: text.clone(),
                    },
                );
            }
            Input::SubmitBallot {
                user,
                previous_teammate,
                stay_with_previous,
                chosen,
            } => {
                self.expect_phase(input, &[Phase::TeammateSelection])?;
                let ballot =
                    self.resolve_ballot(user, previous_teammate.clone(), *stay_with_previous, chosen)?;
                self.state
                    .current_round_mut()
                    .ballots
                    .insert(user.clone(), ballot.clone());
                self.state.phase_submissions.insert(user.clone());
                self.emit(out, now, Event::BallotSubmitted { ballot });
            }
            Input::EditOp { user, team, edit } => {
                self.expect_phase(input, &[Phase::Collaboration])?;
                self.authorize_team(user, *team)?;
                let change = self.state.current_round().shared_texts[*team as usize].resolve(edit)?;
                let op = EditOperation {
                    team: *team,
                    author: user.clone(),
                    change,
                    server_order: self.state.next_seq,
                    at_ms: now,
                };
                self.state.current_round_mut().shared_texts[*team as usize].apply(op.clone());
                self.emit(
                    out,
                    now,
                    Event::EditApplied {
                        request: edit.clone(),
                        op,
                    },
                );
            }
            Input::Chat { user, team, text } => {
                self.expect_phase(input, &[Phase::Collaboration])?;
                self.authorize_team(user, *team)?;
                if text.trim().is_empty() {
                    return Err(SessionError::Validation("empty chat message".into()));
                }
                let message = ChatMessage {
                    team: *team,
                    author: user.clone(),
                    text: text.clone(),
                    server_order: self.state.next_seq,
                    at_ms: now,
                };
                self.state.current_round_mut().chats[*team as usize].push(message.clone());
                self.emit(out, now, Event::ChatPosted { message });
            }
            Input::SubmitRating { user, rating } => {
                self.expect_phase(input, &[Phase::PeerRating])?;
                let rating = self.validate_rating(user, rating)?;
                let replaced = self.record_rating(rating.clone());
                self.emit(out, now, Event::RatingSubmitted { rating, replaced });
            }
            Input::SubmitStoryVote { user, team } => {
                self.expect_phase(input, &[Phase::StoryVoting])?;
                let round = self.state.current_round();
                if round.team_members(*team).is_none() {
                    return Err(SessionError::Validation(format!("unknown team {team}")));
                }
                if round.team_of(user) == Some(*team) {
                    return Err(SessionError::SelfVote);
                }
                let replaced = self
                    .state
                    .current_round_mut()
                    .story_votes
                    .insert(user.clone(), *team)
                    .is_some();
                self.state.phase_submissions.insert(user.clone());
                self.emit(
                    out,
                    now,
                    Event::StoryVoteSubmitted {
                        voter: user.clone(),
                        team: *team,
                        replaced,
                    },
                );
            }
            Input::Depart { user } => {
                self.state.departed.insert(user.clone());
                self.emit(out, now, Event::UserDeparted { user: user.clone() });
            }
        }
        Ok(())
    }

    fn profile_mut(&mut self, user: &UserId) -> &mut ParticipantProfile {
        self.state.profiles.get_mut(user).expect("checked membership")
    }

    fn single_shot(&self, user: &UserId) -> Result<(), SessionError> {
        if self.state.phase_submissions.contains(user) {
            Err(SessionError::Validation(format!(
                "{user} already submitted during {}",
                self.state.phase
            )))
        } else {
            Ok(())
        }
    }

    fn authorize_team(&self, user: &UserId, team: TeamId) -> Result<(), SessionError> {
        match self.state.current_round().team_of(user) {
            Some(t) if t == team => Ok(()),
            _ => Err(SessionError::Authorization(format!(
                "{user} is not a member of team {team}"
            ))),
        }
    }

    /// Fills in the previous teammate the voter is deciding about and checks
    /// the ballot against the active roster.
    fn resolve_ballot(
        &self,
        user: &UserId,
        previous_teammate: Option<UserId>,
        stay: Option<bool>,
        chosen: &BTreeSet<UserId>,
    ) -> Result<PreferenceBallot, SessionError> {
        let candidates = self.state.previous_teammates(user);
        let previous_teammate = match previous_teammate {
            Some(p) if !candidates.contains(&p) => {
                return Err(SessionError::Relationship(format!(
                    "{p} was not {user}'s teammate last round"
                )))
            }
            Some(p) => Some(p),
            None => candidates.first().cloned(),
        };
        let stay_with_previous = match (&previous_teammate, stay) {
            (Some(_), s) => Some(s.unwrap_or(true)),
            (None, Some(_)) => {
                return Err(SessionError::Validation(
                    "no previous teammate to stay with".into(),
                ))
            }
            (None, None) => None,
        };
        let ballot = PreferenceBallot {
            voter: user.clone(),
            previous_teammate,
            stay_with_previous,
            chosen: chosen.clone(),
        };
        encode_ballot(&ballot, &self.state.active_users())?;
        Ok(ballot)
    }

    fn validate_rating(&self, rater: &UserId, form: &RatingForm) -> Result<PeerRating, SessionError> {
        if form.ratee == *rater {
            return Err(SessionError::Relationship("participants do not rate themselves".into()));
        }
        if !self.state.current_round().teammates_of(rater).contains(&form.ratee) {
            return Err(SessionError::Relationship(format!(
                "{} was not {rater}'s teammate this round",
                form.ratee
            )));
        }
        for (axis, v) in [
            ("skillfulness", form.skillfulness),
            ("collaboration", form.collaboration),
            ("helpfulness", form.helpfulness),
            ("own_helpfulness", form.own_helpfulness),
        ] {
            if !(1..=5).contains(&v) {
                return Err(SessionError::Validation(format!("{axis} {v} is outside 1..=5")));
            }
        }
        Ok(PeerRating {
            rater: rater.clone(),
            ratee: form.ratee.clone(),
            round: self.state.round,
            skillfulness: form.skillfulness,
            collaboration: form.collaboration,
            helpfulness: form.helpfulness,
            own_helpfulness: form.own_helpfulness,
            shared_competencies: form.shared_competencies.clone(),
        })
    }

    /// Stores a rating, replacing an earlier one from the same rater for the
    /// same ratee this round.
    fn record_rating(&mut self, rating: PeerRating) -> bool {
        let same = |r: &PeerRating| {
            r.rater == rating.rater && r.ratee == rating.ratee && r.round == rating.round
        };
        let round = self.state.current_round_mut();
        let replaced = match round.ratings.iter_mut().find(|r| same(r)) {
            Some(r) => {
                *r = rating.clone();
                true
            }
            None => {
                round.ratings.push(rating.clone());
                false
            }
        };
        let received = &mut self.profile_mut(&rating.ratee).ratings_received;
        match received.iter_mut().find(|r| same(r)) {
            Some(r) => *r = rating,
            None => received.push(rating),
        }
        replaced
    }

    fn phase_complete(&self) -> bool {
        let s = &self.state;
        if !s.config.advance_when_complete || s.finalized {
            return false;
        }
        let active = s.active_users();
        match s.phase {
            Phase::Demographics
            | Phase::WritingSample
            | Phase::TeammateSelection
            | Phase::FinalQuestionnaire => active.is_subset(&s.phase_submissions),
            Phase::StoryVoting => {
                let teams = s.current_round().teams.as_ref().map_or(0, |t| t.teams.len());
                teams < 2 || active.is_subset(&s.phase_submissions)
            }
            Phase::PeerRating => {
                let round = s.current_round();
                active.iter().all(|u| {
                    round
                        .teammates_of(u)
                        .iter()
                        .filter(|m| s.is_active(m))
                        .all(|m| round.ratings.iter().any(|r| r.rater == *u && r.ratee == *m))
                })
            }
            _ => false,
        }
    }

    fn enter(&mut self, out: &mut Out, phase: Phase, at: u64) {
        let s = &mut self.state;
        let duration = phase.duration_ms(&s.config.phase_schedule);
        s.phase = phase;
        s.phase_entered_ms = at;
        s.deadline_ms = duration.map(|d| at + d);
        s.reminder_due_ms = (phase == Phase::Collaboration).then(|| {
            at + s.config.phase_schedule.collaboration_ms
                - s.config.phase_schedule.wrapup_reminder_offset_ms
        });
        s.phase_submissions.clear();
        let deadline_ms = s.deadline_ms;
        self.emit(out, at, Event::PhaseEntered { phase, deadline_ms });
    }

    fn close_phase(&mut self, out: &mut Out, reason: CloseReason, at: u64) {
        let closing = self.state.phase;
        self.emit(out, at, Event::PhaseClosed { phase: closing, reason });
        self.state.deadline_ms = None;
        self.state.reminder_due_ms = None;

        let c = &self.state.config;
        let next = closing
            .successor(c.condition, self.state.round, c.rounds)
            .expect("the terminal phase is never closed");
        match closing {
            Phase::TeammateSelection => self.close_ballots(out, at),
            Phase::StoryVoting => self.settle_round(out, at),
            Phase::WinnerDisplay if next != Phase::FinalQuestionnaire => {
                self.state.round += 1;
                let round = self.state.round;
                self.state.rounds.push(RoundState::new(round));
            }
            _ => {}
        }
        if next == Phase::Collaboration && self.state.current_round().teams.is_none() {
            self.form_teams(out, at, &[]);
        }

        self.enter(out, next, at);
        if next == Phase::Leaderboard {
            self.state.leaderboard = rules::leaderboard(&self.state);
            self.state.finalized = true;
            let event = Event::SessionFinalized {
                leaderboard: self.state.leaderboard.clone(),
                final_story: self.state.main_story.clone(),
            };
            self.emit(out, at, event);
        } else if self.phase_complete() {
            self.close_phase(out, CloseReason::Complete, at);
        }
    }

    /// Effective ballots for every active participant: submitted ones with
    /// departed users removed, defaults for the rest.
    fn close_ballots(&mut self, out: &mut Out, at: u64) {
        let active = self.state.active_users();
        let mut ballots = Vec::with_capacity(active.len());
        let mut defaulted = Vec::new();
        for user in &active {
            let ballot = match self.state.current_round().ballots.get(user) {
                Some(b) => {
                    let mut b = b.clone();
                    b.chosen.retain(|c| active.contains(c));
                    if b.previous_teammate.as_ref().is_some_and(|p| !active.contains(p)) {
                        b.previous_teammate = None;
                        b.stay_with_previous = None;
                    }
                    b
                }
                None => {
                    defaulted.push(user.clone());
                    let prev = self.state.previous_teammates(user).into_iter().next();
                    PreferenceBallot::default_for(user.clone(), prev)
                }
            };
            ballots.push(ballot);
        }
        self.state.current_round_mut().closed_ballots = ballots.clone();
        let used = self.state.config.condition == super::Condition::Sot;
        self.emit(
            out,
            at,
            Event::BallotsClosed {
                ballots: ballots.clone(),
                defaulted,
                used,
            },
        );
        self.form_teams(out, at, &ballots);
    }

    fn form_teams(&mut self, out: &mut Out, at: u64, ballots: &[PreferenceBallot]) {
        let Formation {
            assignment,
            method,
            seed,
        } = rules::form_round_teams(&self.state, ballots)
            .expect("effective ballots are valid for the active roster");
        if method == FormationMethod::FixedRandom && self.state.fixed_assignment.is_none() {
            self.state.fixed_assignment = Some(assignment.clone());
        }
        let round = self.state.current_round_mut();
        round.shared_texts = vec![TeamText::default(); assignment.teams.len()];
        round.chats = vec![Vec::new(); assignment.teams.len()];
        round.teams = Some(assignment.clone());
        self.emit(
            out,
            at,
            Event::TeamsFormed {
                method,
                seed,
                assignment,
            },
        );
    }

    fn settle_round(&mut self, out: &mut Out, at: u64) {
        let round = self.state.current_round();
        let Some(teams) = round.teams.clone() else {
            return;
        };
        let tie_seed = seed::derive(self.state.config.seed, seed::purpose::VOTE_TIE, self.state.round as u64);
        let Ok(tally) = rules::tally_story_votes(&round.story_votes, &teams, tie_seed) else {
            return;
        };
        let winner = tally.winner;
        self.state.current_round_mut().winner = Some(winner);
        self.emit(
            out,
            at,
            Event::VotesTallied {
                counts: tally.counts,
                winner,
                tied: tally.tied,
                seed: tally.seed,
                abstention_tie: tally.abstention_tie,
            },
        );
        let (fragment, empty) = rules::append_winning_story(&mut self.state, winner);
        self.emit(
            out,
            at,
            Event::StoryAppended {
                team: winner,
                fragment,
                empty,
            },
        );
        let members = rules::settle_rewards(&mut self.state, winner)
            .expect("each round is settled once, when its vote closes");
        let bonus = self.state.config.win_bonus;
        self.emit(
            out,
            at,
            Event::RewardsSettled {
                team: winner,
                members,
                bonus,
            },
        );
    }
}

