//! Headless sessions driven by scripted agents over the wire protocol.
//!
//! Time is virtual: the runner jumps from one scheduled agent action or
//! session timer to the next, so a full session takes milliseconds. An
//! optional speedup paces the run against the wall clock instead.

mod agent;
mod words;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agent::{agent_select_teammates, agent_vote_story, share_rating, AgentStrategy, BallotContext};
use agent::{ActionKind, Agent, Pending};

use crate::affinity::UserId;
use crate::gateway::{GatewayError, Outgoing, Recipient, SessionHost};
use crate::seed;
use crate::session::{FinalReport, LogRecord, SessionConfig, SessionError, SessionState};

/// Gap between consecutive agent registrations.
const REGISTRATION_GAP_MS: u64 = 500;
/// Virtual time after which a run is declared stuck.
const MAX_VIRTUAL_MS: u64 = 7 * 24 * 3_600_000;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyMix {
    pub play_to_win: usize,
    pub profile_affinity: usize,
    pub loyal: usize,
    pub random: usize,
}

impl StrategyMix {
    pub fn total(&self) -> usize {
        self.play_to_win + self.profile_affinity + self.loyal + self.random
    }

    pub fn count(&self, s: AgentStrategy) -> usize {
        match s {
            AgentStrategy::PlayToWin => self.play_to_win,
            AgentStrategy::ProfileAffinity => self.profile_affinity,
            AgentStrategy::Loyal => self.loyal,
            AgentStrategy::Random => self.random,
        }
    }

    /// `n` agents of a single strategy.
    pub fn uniform(strategy: AgentStrategy, n: usize) -> Self {
        let mut mix = StrategyMix::default();
        match strategy {
            AgentStrategy::PlayToWin => mix.play_to_win = n,
            AgentStrategy::ProfileAffinity => mix.profile_affinity = n,
            AgentStrategy::Loyal => mix.loyal = n,
            AgentStrategy::Random => mix.random = n,
        }
        mix
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationPlan {
    pub config: SessionConfig,
    pub strategies: StrategyMix,
    /// Seeds the session, the agents' decisions and the scheduler.
    pub master_seed: u64,
    pub text_seed: u64,
    /// Probability that an agent votes for the longest story.
    pub vote_bias: f64,
    /// Per-agent overrides of `vote_bias`, by registration order.
    pub agent_vote_bias: Vec<f64>,
    /// Virtual milliseconds per wall-clock millisecond; unpaced when absent.
    pub speedup: Option<f64>,
}

impl Default for SimulationPlan {
    fn default() -> Self {
        SimulationPlan {
            config: SessionConfig::default(),
            strategies: StrategyMix::uniform(AgentStrategy::Random, 8),
            master_seed: 0,
            text_seed: 0,
            vote_bias: 0.5,
            agent_vote_bias: Vec::new(),
            speedup: None,
        }
    }
}

impl SimulationPlan {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn batch_size(&self) -> usize {
        self.strategies.total()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |m: String| Err(SimError::InvalidPlan(m));
        self.config.validate().map_err(|e| SimError::InvalidPlan(e.to_string()))?;
        let n = self.batch_size();
        if n == 0 {
            return invalid("the strategy mix is empty".into());
        }
        if n > self.config.batch_max {
            return invalid(format!("{n} agents exceed batch_max {}", self.config.batch_max));
        }
        if self.agent_vote_bias.len() > n {
            return invalid("more vote-bias overrides than agents".into());
        }
        if std::iter::once(&self.vote_bias)
            .chain(&self.agent_vote_bias)
            .any(|b| !(0.0..=1.0).contains(b))
        {
            return invalid("vote bias must lie in [0, 1]".into());
        }
        if self.speedup.is_some_and(|s| s <= 0.0 || !s.is_finite()) {
            return invalid("speedup must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation plan: {0}")]
    InvalidPlan(String),
    #[error("session aborted: {0}")]
    Aborted(SessionError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("simulation stalled at {at_ms} ms with nothing scheduled")]
    Stalled { at_ms: u64 },
}

#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub records: Vec<LogRecord>,
    pub report: FinalReport,
    pub state: SessionState,
    pub strategies: BTreeMap<UserId, AgentStrategy>,
    /// Frames the gateway refused, across all agents.
    pub rejections: usize,
    pub agent_errors: Vec<(String, String)>,
    pub virtual_ms: u64,
}

struct Scheduler {
    queue: BinaryHeap<Reverse<(u64, u64, usize, usize)>>,
    pending: Vec<Pending>,
    rng: rand_chacha::ChaCha8Rng,
}

impl Scheduler {
    fn push(&mut self, at: u64, agent: usize, action: Pending) {
        let key = self.rng.random::<u64>();
        self.pending.push(action);
        self.queue
            .push(Reverse((at, key, agent, self.pending.len() - 1)));
    }

    fn peek_time(&self) -> Option<u64> {
        self.queue.peek().map(|Reverse((t, ..))| *t)
    }

    fn pop(&mut self) -> Option<(u64, usize, Pending)> {
        self.queue
            .pop()
            .map(|Reverse((t, _, agent, slot))| (t, agent, self.pending[slot]))
    }
}

fn dispatch(
    agents: &mut [Agent],
    by_user: &BTreeMap<UserId, usize>,
    sender: Option<usize>,
    outgoing: Vec<Outgoing>,
    sched: &mut Scheduler,
    now: u64,
) {
    for Outgoing { to, event } in outgoing {
        let target = match to {
            Recipient::Sender => sender,
            Recipient::User(u) => by_user.get(&u).copied(),
        };
        if let Some(i) = target {
            for (at, action) in agents[i].observe(&event, now) {
                sched.push(at, i, action);
            }
        }
    }
}

/// Runs one session to completion.
pub fn run_simulation(plan: &SimulationPlan) -> Result<SimulationOutcome, SimError> {
    plan.validate()?;
    let mut config = plan.config.clone();
    config.seed = plan.master_seed;
    let session = format!("sim-{}", plan.master_seed);
    let mut host = SessionHost::in_memory(session.clone(), config)
        .map_err(|e| SimError::InvalidPlan(e.to_string()))?
        .with_token_seed(seed::derive(plan.master_seed, "tokens", 0));

    let mut strategies: Vec<AgentStrategy> = AgentStrategy::ALL
        .iter()
        .flat_map(|s| std::iter::repeat_n(*s, plan.strategies.count(*s)))
        .collect();
    strategies.shuffle(&mut seed::rng(plan.master_seed, "strategies", 0));
    let mut agents: Vec<Agent> = strategies
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Agent::new(
                *s,
                format!("agent{:02}", i + 1),
                session.clone(),
                seed::rng(plan.master_seed, "agent", i as u64),
                seed::rng(plan.text_seed, "text", i as u64),
                plan.agent_vote_bias.get(i).copied().unwrap_or(plan.vote_bias),
            )
        })
        .collect();

    let mut sched = Scheduler {
        queue: BinaryHeap::new(),
        pending: Vec::new(),
        rng: seed::rng(plan.master_seed, "scheduler", 0),
    };
    for i in 0..agents.len() {
        let register = Pending {
            phase: None,
            round: 0,
            kind: ActionKind::Register,
        };
        sched.push(i as u64 * REGISTRATION_GAP_MS, i, register);
    }

    let mut by_user: BTreeMap<UserId, usize> = BTreeMap::new();
    let mut clock = 0u64;
    while !host.is_finished() {
        let action_at = sched.peek_time();
        let timer_at = host.next_deadline();
        let next = match (action_at, timer_at) {
            (Some(a), Some(t)) => a.min(t),
            (a, t) => a.or(t).ok_or(SimError::Stalled { at_ms: clock })?,
        };
        if next > MAX_VIRTUAL_MS {
            return Err(SimError::Stalled { at_ms: clock });
        }
        if let Some(speedup) = plan.speedup {
            let real = (next.saturating_sub(clock)) as f64 / speedup;
            std::thread::sleep(Duration::from_secs_f64(real / 1000.0));
        }
        clock = clock.max(next);

        // Timers due now fire before actions scheduled for the same instant.
        if timer_at.is_some_and(|t| t <= next) {
            let out = host.tick(clock)?;
            dispatch(&mut agents, &by_user, None, out, &mut sched, clock);
            continue;
        }
        let (_, i, action) = sched.pop().expect("peeked");
        for msg in agents[i].act(action, clock) {
            let text = serde_json::to_string(&msg).expect("client messages serialize");
            let handled = host.handle_text(&text, clock)?;
            if let Some(user) = &handled.sender {
                by_user.insert(user.clone(), i);
            }
            dispatch(&mut agents, &by_user, Some(i), handled.outgoing, &mut sched, clock);
        }
    }
    if let Some(e) = host.aborted() {
        return Err(SimError::Aborted(e.clone()));
    }

    let state = host.state().expect("finished sessions ran").clone();
    Ok(SimulationOutcome {
        records: host.records().to_vec(),
        report: host.final_report().expect("finished sessions are finalized"),
        strategies: by_user
            .iter()
            .map(|(u, i)| (u.clone(), agents[*i].strategy))
            .collect(),
        rejections: host.rejection_count(),
        agent_errors: agents
            .iter()
            .flat_map(|a| a.errors.iter().map(|e| (a.username.clone(), e.clone())))
            .collect(),
        virtual_ms: clock,
        state,
    })
}
