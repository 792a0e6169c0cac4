//! Scripted participants.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::words;
use crate::affinity::{PreferenceBallot, UserId};
use crate::gateway::{
    CandidateStory, ClientAction, ClientMessage, RosterStatus, ServerEvent, ServerEventBody,
    PROTOCOL_VERSION,
};
use crate::session::{Answers, Change, EditRequest, Phase, RatingForm, TeamId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentStrategy {
    /// Picks members of the last winning team.
    PlayToWin,
    /// Picks a fixed pair of preferred profiles.
    ProfileAffinity,
    /// Always stays; otherwise picks whoever it rated highest.
    Loyal,
    /// Uniform random valid ballots.
    Random,
}

impl AgentStrategy {
    pub const ALL: [AgentStrategy; 4] = [
        AgentStrategy::PlayToWin,
        AgentStrategy::ProfileAffinity,
        AgentStrategy::Loyal,
        AgentStrategy::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentStrategy::PlayToWin => "play_to_win",
            AgentStrategy::ProfileAffinity => "profile_affinity",
            AgentStrategy::Loyal => "loyal",
            AgentStrategy::Random => "random",
        }
    }
}

/// What an agent knows when it fills in a ballot.
#[derive(Debug, Clone, Default)]
pub struct BallotContext {
    pub me: UserId,
    pub previous_teammates: Vec<UserId>,
    /// Profiles offered for selection.
    pub candidates: Vec<UserId>,
    /// Members of the last round's winning team.
    pub last_winners: Vec<UserId>,
    pub own_team_won: bool,
    /// Sum of the three axes this agent last gave each participant.
    pub given_ratings: BTreeMap<UserId, u32>,
    pub preferred: Vec<UserId>,
    pub sample_lengths: BTreeMap<UserId, usize>,
}

pub fn agent_select_teammates(
    strategy: AgentStrategy,
    ctx: &BallotContext,
    rng: &mut ChaCha8Rng,
) -> PreferenceBallot {
    let prev = ctx.previous_teammates.first().cloned();
    let pool: Vec<&UserId> = ctx
        .candidates
        .iter()
        .filter(|c| **c != ctx.me && Some(*c) != prev.as_ref())
        .collect();
    let (stay, chosen): (bool, BTreeSet<UserId>) = match strategy {
        AgentStrategy::PlayToWin if ctx.last_winners.is_empty() => {
            let mut by_sample = pool.clone();
            by_sample.sort_by_key(|u| std::cmp::Reverse(ctx.sample_lengths.get(*u).copied().unwrap_or(0)));
            (true, by_sample.into_iter().take(2).cloned().collect())
        }
        AgentStrategy::PlayToWin => (
            ctx.own_team_won,
            pool.iter()
                .filter(|u| ctx.last_winners.contains(u))
                .take(2)
                .map(|u| (*u).clone())
                .collect(),
        ),
        AgentStrategy::Loyal => {
            let mut rated: Vec<(&UserId, u32)> = pool
                .iter()
                .filter_map(|u| ctx.given_ratings.get(*u).map(|r| (*u, *r)))
                .collect();
            rated.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            (true, rated.into_iter().take(2).map(|(u, _)| u.clone()).collect())
        }
        AgentStrategy::ProfileAffinity => (
            prev.as_ref().is_none_or(|p| ctx.preferred.contains(p)),
            pool.iter()
                .filter(|u| ctx.preferred.contains(u))
                .take(2)
                .map(|u| (*u).clone())
                .collect(),
        ),
        AgentStrategy::Random => {
            let stay = rng.random_bool(0.5);
            let mut shuffled = pool.clone();
            shuffled.shuffle(rng);
            let n = rng.random_range(0..=2usize.min(shuffled.len()));
            (stay, shuffled.into_iter().take(n).cloned().collect())
        }
    };
    PreferenceBallot {
        voter: ctx.me.clone(),
        stay_with_previous: prev.as_ref().map(|_| stay),
        previous_teammate: prev,
        chosen,
    }
}

/// Votes for the longest candidate with probability `bias`, otherwise for a
/// uniformly drawn one. Ties in length go to the lowest team id.
pub fn agent_vote_story(
    candidates: &[CandidateStory],
    bias: f64,
    rng: &mut ChaCha8Rng,
) -> Option<TeamId> {
    let longest = rng.random_bool(bias.clamp(0.0, 1.0));
    if longest {
        candidates
            .iter()
            .max_by(|a, b| {
                a.text
                    .chars()
                    .count()
                    .cmp(&b.text.chars().count())
                    .then_with(|| b.team.cmp(&a.team))
            })
            .map(|c| c.team)
    } else {
        candidates.choose(rng).map(|c| c.team)
    }
}

/// Rating from contribution share: `round(1 + 4 * share)`.
pub fn share_rating(chars: usize, total: usize) -> u8 {
    if total == 0 {
        return 3;
    }
    (1.0 + 4.0 * chars as f64 / total as f64).round().clamp(1.0, 5.0) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ActionKind {
    Register,
    Questionnaire,
    Sample,
    Ballot,
    Edit,
    Chat,
    Rate,
    Vote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Pending {
    pub phase: Option<Phase>,
    pub round: u32,
    pub kind: ActionKind,
}

pub(crate) struct Agent {
    pub strategy: AgentStrategy,
    pub username: String,
    pub user: Option<UserId>,
    token: Option<String>,
    session: String,
    rng: ChaCha8Rng,
    text_rng: ChaCha8Rng,
    verbosity: usize,
    vote_bias: f64,
    phase: Option<Phase>,
    round: u32,
    team: Option<TeamId>,
    teammates: Vec<UserId>,
    ctx: BallotContext,
    text_version: usize,
    text_len: usize,
    chars_by: BTreeMap<UserId, usize>,
    stories: Vec<CandidateStory>,
    pub errors: Vec<String>,
}

const DEMOGRAPHICS: &[(&str, &[&str])] = &[
    ("gender", &["female", "male", "non_binary", "undisclosed"]),
    ("age", &["18-24", "25-34", "35-44", "45-54", "55+"]),
    ("ethnicity", &["a", "b", "c", "undisclosed"]),
    ("education", &["secondary", "bachelor", "master", "doctorate"]),
    ("employment", &["student", "employed", "self_employed", "unemployed"]),
    ("prior_experience", &["none", "some", "extensive"]),
    ("self_perceived_creativity", &["1", "2", "3", "4", "5"]),
];

const EXIT_QUESTIONS: &[(&str, &[&str])] = &[
    ("satisfaction", &["1", "2", "3", "4", "5"]),
    ("would_repeat", &["yes", "no"]),
];

impl Agent {
    pub fn new(
        strategy: AgentStrategy,
        username: String,
        session: String,
        mut rng: ChaCha8Rng,
        text_rng: ChaCha8Rng,
        vote_bias: f64,
    ) -> Self {
        let verbosity = rng.random_range(1..=3);
        Agent {
            strategy,
            username,
            user: None,
            token: None,
            session,
            rng,
            text_rng,
            verbosity,
            vote_bias,
            phase: None,
            round: 0,
            team: None,
            teammates: Vec::new(),
            ctx: BallotContext::default(),
            text_version: 0,
            text_len: 0,
            chars_by: BTreeMap::new(),
            stories: Vec::new(),
            errors: Vec::new(),
        }
    }

    fn answers(&mut self, questions: &[(&str, &[&str])]) -> Answers {
        questions
            .iter()
            .map(|(q, options)| {
                let a = options.choose(&mut self.rng).expect("non-empty options");
                (q.to_string(), a.to_string())
            })
            .collect()
    }

    /// Reacts to one delivered frame; returns actions to schedule as
    /// `(at_ms, action)`.
    pub fn observe(&mut self, event: &ServerEvent, now: u64) -> Vec<(u64, Pending)> {
        let mut out = Vec::new();
        match &event.body {
            ServerEventBody::Registered { user, token, .. } => {
                self.user = Some(user.clone());
                self.ctx.me = user.clone();
                self.token = Some(token.clone());
            }
            ServerEventBody::RosterUpdate {
                status: RosterStatus::Admitted,
                roster,
                ..
            } => {
                let others: Vec<UserId> = roster
                    .iter()
                    .map(|e| e.user.clone())
                    .filter(|u| Some(u) != self.user.as_ref())
                    .collect();
                self.ctx.preferred = others.choose_multiple(&mut self.rng, 2).cloned().collect();
            }
            ServerEventBody::PhaseEntered {
                phase,
                round,
                deadline_ms,
                ..
            } => {
                self.phase = Some(*phase);
                self.round = *round;
                let span = deadline_ms.map_or(0, |d| d.saturating_sub(now));
                let at = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
                    now + (span as f64 * rng.random_range(lo..hi)) as u64
                };
                let pending = |kind| Pending {
                    phase: Some(*phase),
                    round: *round,
                    kind,
                };
                match phase {
                    Phase::Demographics | Phase::FinalQuestionnaire => {
                        out.push((at(&mut self.rng, 0.1, 0.6), pending(ActionKind::Questionnaire)))
                    }
                    Phase::WritingSample => {
                        out.push((at(&mut self.rng, 0.2, 0.7), pending(ActionKind::Sample)))
                    }
                    Phase::TeammateSelection => {
                        out.push((at(&mut self.rng, 0.1, 0.7), pending(ActionKind::Ballot)))
                    }
                    Phase::Collaboration => {
                        let edits = 1 + self.verbosity + self.rng.random_range(0..2);
                        for _ in 0..edits {
                            out.push((at(&mut self.rng, 0.05, 0.85), pending(ActionKind::Edit)));
                        }
                        out.push((at(&mut self.rng, 0.05, 0.85), pending(ActionKind::Chat)));
                    }
                    Phase::PeerRating => {
                        out.push((at(&mut self.rng, 0.1, 0.7), pending(ActionKind::Rate)))
                    }
                    Phase::StoryVoting => {
                        out.push((at(&mut self.rng, 0.2, 0.8), pending(ActionKind::Vote)))
                    }
                    _ => {}
                }
            }
            ServerEventBody::ProfileViews {
                previous_teammates,
                views,
                ..
            } => {
                self.ctx.previous_teammates = previous_teammates.clone();
                self.ctx.candidates = views.iter().map(|v| v.user.clone()).collect();
                self.ctx.sample_lengths = views
                    .iter()
                    .map(|v| {
                        let len = v.writing_sample.as_deref().map_or(0, |s| s.chars().count());
                        (v.user.clone(), len)
                    })
                    .collect();
            }
            ServerEventBody::TeamsFormed { team, members, .. } => {
                self.team = Some(*team);
                self.teammates = members
                    .iter()
                    .filter(|m| Some(*m) != self.user.as_ref())
                    .cloned()
                    .collect();
                self.text_version = 0;
                self.text_len = 0;
                self.chars_by.clear();
            }
            ServerEventBody::TextState {
                version, text, op, ..
            } => {
                if *version >= self.text_version {
                    self.text_version = *version;
                    self.text_len = text.chars().count();
                }
                if let Some(op) = op {
                    if let Change::Insert { text, .. } = &op.change {
                        *self.chars_by.entry(op.author.clone()).or_default() += text.chars().count();
                    }
                }
            }
            ServerEventBody::CandidateStories { stories, .. } => {
                self.stories = stories.clone();
            }
            ServerEventBody::WinnerAnnounced { team, members, .. } => {
                self.ctx.last_winners = members.clone();
                self.ctx.own_team_won = Some(*team) == self.team;
            }
            ServerEventBody::Error { code, message, action } => {
                self.errors.push(format!(
                    "{}: {code}: {message}",
                    action.as_deref().unwrap_or("-")
                ));
            }
            _ => {}
        }
        out
    }

    fn message(&self, action: ClientAction, now: u64) -> ClientMessage {
        ClientMessage {
            v: PROTOCOL_VERSION,
            session: self.session.clone(),
            token: self.token.clone(),
            client_ts: Some(now),
            action,
        }
    }

    /// Builds the frames for a due action, or nothing if the phase it was
    /// scheduled for has passed.
    pub fn act(&mut self, pending: Pending, now: u64) -> Vec<ClientMessage> {
        if pending.kind == ActionKind::Register {
            let username = self.username.clone();
            return vec![self.message(ClientAction::Register { username }, now)];
        }
        if pending.phase != self.phase || pending.round != self.round {
            return Vec::new();
        }
        let actions = match pending.kind {
            ActionKind::Register => unreachable!(),
            ActionKind::Questionnaire => {
                let questions = if self.phase == Some(Phase::Demographics) {
                    DEMOGRAPHICS
                } else {
                    EXIT_QUESTIONS
                };
                vec![ClientAction::SubmitQuestionnaire {
                    answers: self.answers(questions),
                }]
            }
            ActionKind::Sample => {
                let sentences = 1 + self.verbosity;
                let text = (0..sentences)
                    .map(|_| {
                        let n = 5 + self.text_rng.random_range(0..6);
                        words::sentence(&mut self.text_rng, n)
                    })
                    .collect::<Vec<_>>()
                    .join(" ");
                vec![ClientAction::SubmitSample { text }]
            }
            ActionKind::Ballot => {
                let b = agent_select_teammates(self.strategy, &self.ctx, &mut self.rng);
                vec![ClientAction::SubmitBallot {
                    previous_teammate: b.previous_teammate,
                    stay_with_previous: b.stay_with_previous,
                    chosen: b.chosen,
                }]
            }
            ActionKind::Edit => {
                let Some(team) = self.team else {
                    return Vec::new();
                };
                let n = 3 * self.verbosity + self.text_rng.random_range(0..4);
                let mut text = words::sentence(&mut self.text_rng, n);
                if self.text_len > 0 {
                    text.insert(0, ' ');
                }
                vec![ClientAction::EditOp {
                    team,
                    edit: EditRequest {
                        base_version: self.text_version,
                        change: Change::Insert {
                            position: self.text_len,
                            text,
                        },
                    },
                }]
            }
            ActionKind::Chat => {
                let Some(team) = self.team else {
                    return Vec::new();
                };
                let text = words::sentence(&mut self.text_rng, 4);
                vec![ClientAction::Chat { team, text }]
            }
            ActionKind::Rate => self.ratings(),
            ActionKind::Vote => {
                match agent_vote_story(&self.stories, self.vote_bias, &mut self.rng) {
                    Some(team) => vec![ClientAction::SubmitStoryVote { team }],
                    None => Vec::new(),
                }
            }
        };
        actions.into_iter().map(|a| self.message(a, now)).collect()
    }

    fn ratings(&mut self) -> Vec<ClientAction> {
        let me = self.user.clone().unwrap_or_else(|| UserId::new(""));
        let total: usize = self.chars_by.values().sum();
        let own = share_rating(self.chars_by.get(&me).copied().unwrap_or(0), total);
        let mut out = Vec::new();
        for mate in self.teammates.clone() {
            let (score, own_helpfulness) = if self.strategy == AgentStrategy::Loyal {
                (5, 5)
            } else {
                (share_rating(self.chars_by.get(&mate).copied().unwrap_or(0), total), own)
            };
            self.ctx.given_ratings.insert(mate.clone(), 3 * score as u32);
            let shared = crate::session::Competency::ALL
                .iter()
                .copied()
                .filter(|_| self.rng.random_bool(0.5))
                .collect();
            out.push(ClientAction::SubmitRating(RatingForm {
                ratee: mate,
                skillfulness: score,
                collaboration: score,
                helpfulness: score,
                own_helpfulness,
                shared_competencies: shared,
            }));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn ids(s: &[&str]) -> Vec<UserId> {
        s.iter().map(|u| UserId::from(*u)).collect()
    }

    fn ctx() -> BallotContext {
        BallotContext {
            me: "a".into(),
            previous_teammates: ids(&["b"]),
            candidates: ids(&["b", "c", "d", "x", "y"]),
            ..Default::default()
        }
    }

    #[test]
    fn play_to_win_after_losing_follows_the_winners() {
        let mut c = ctx();
        c.last_winners = ids(&["x", "y"]);
        c.own_team_won = false;
        let b = agent_select_teammates(AgentStrategy::PlayToWin, &c, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(b.stay_with_previous, Some(false));
        assert_eq!(b.chosen, ids(&["x", "y"]).into_iter().collect());
        b.validate().unwrap();
    }

    #[test]
    fn loyal_always_stays() {
        let mut c = ctx();
        c.given_ratings.insert("c".into(), 12);
        c.given_ratings.insert("d".into(), 15);
        c.given_ratings.insert("b".into(), 3);
        let b = agent_select_teammates(AgentStrategy::Loyal, &c, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(b.stay_with_previous, Some(true));
        assert_eq!(b.chosen, ids(&["c", "d"]).into_iter().collect());
    }

    #[test]
    fn random_ballots_are_seeded_and_valid() {
        for s in 0..50 {
            let a = agent_select_teammates(AgentStrategy::Random, &ctx(), &mut ChaCha8Rng::seed_from_u64(s));
            let b = agent_select_teammates(AgentStrategy::Random, &ctx(), &mut ChaCha8Rng::seed_from_u64(s));
            assert_eq!(a, b);
            a.validate().unwrap();
        }
    }

    #[test]
    fn full_bias_votes_for_the_longest_story() {
        let stories = vec![
            CandidateStory {
                team: 1,
                text: "x".repeat(10),
            },
            CandidateStory {
                team: 2,
                text: "x".repeat(50),
            },
        ];
        for s in 0..10 {
            assert_eq!(agent_vote_story(&stories, 1.0, &mut ChaCha8Rng::seed_from_u64(s)), Some(2));
        }
        let a = agent_vote_story(&stories, 0.0, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, agent_vote_story(&stories, 0.0, &mut ChaCha8Rng::seed_from_u64(9)));
        assert!(matches!(a, Some(1 | 2)));
    }

    #[test]
    fn share_ratings_span_the_scale() {
        assert_eq!(share_rating(0, 100), 1);
        assert_eq!(share_rating(50, 100), 3);
        assert_eq!(share_rating(100, 100), 5);
        assert_eq!(share_rating(0, 0), 3);
    }
}
