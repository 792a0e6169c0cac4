use std::collections::BTreeSet;

use sots::affinity::TeamAssignment;
use sots::session::{Condition, Event, FormationMethod, SessionConfig, SessionError};
use sots::sim::{run_simulation, AgentStrategy, SimError, SimulationPlan, StrategyMix};

fn plan(condition: Condition, mix: StrategyMix, seed: u64) -> SimulationPlan {
    SimulationPlan {
        config: SessionConfig {
            condition,
            ..SessionConfig::default()
        },
        strategies: mix,
        master_seed: seed,
        text_seed: seed.wrapping_add(1),
        ..SimulationPlan::default()
    }
}

fn mixed(n: usize) -> StrategyMix {
    StrategyMix {
        play_to_win: n / 4,
        profile_affinity: n / 4,
        loyal: n / 4,
        random: n - 3 * (n / 4),
    }
}

fn teams_per_round(records: &[sots::session::LogRecord]) -> Vec<(FormationMethod, TeamAssignment)> {
    records
        .iter()
        .filter_map(|r| match &r.event {
            Event::TeamsFormed {
                method, assignment, ..
            } => Some((*method, assignment.clone())),
            _ => None,
        })
        .collect()
}

#[test]
fn clean_runs_finish_without_rejections() {
    for condition in [Condition::Sot, Condition::Placebo, Condition::NoAgency] {
        let out = run_simulation(&plan(condition, mixed(8), 3)).unwrap();
        assert_eq!(out.rejections, 0, "{condition:?}: {:?}", out.agent_errors);
        assert!(out.agent_errors.is_empty());
        assert!(out.state.finalized);
        assert_eq!(out.state.roster.len(), 8);
        assert_eq!(out.state.fragments.len(), 3);
        assert_eq!(teams_per_round(&out.records).len(), 3);
        let total: u64 = out.report.leaderboard.iter().map(|e| e.reward_balance).sum();
        assert_eq!(total, 8 * 5 + 3 * 2 * 5);
    }
}

#[test]
fn no_agency_keeps_round_one_teams() {
    let out = run_simulation(&plan(Condition::NoAgency, mixed(8), 11)).unwrap();
    let rounds = teams_per_round(&out.records);
    assert!(rounds.iter().all(|(m, t)| *m == FormationMethod::FixedRandom && *t == rounds[0].1));
    assert!(!out
        .records
        .iter()
        .any(|r| matches!(r.event, Event::BallotSubmitted { .. } | Event::BallotsClosed { .. })));
}

#[test]
fn loyal_sot_teams_settle_after_round_two() {
    let out = run_simulation(&plan(
        Condition::Sot,
        StrategyMix::uniform(AgentStrategy::Loyal, 8),
        5,
    ))
    .unwrap();
    let rounds = teams_per_round(&out.records);
    let as_sets = |t: &TeamAssignment| -> BTreeSet<BTreeSet<String>> {
        t.teams
            .iter()
            .map(|m| m.iter().map(|u| u.to_string()).collect())
            .collect()
    };
    assert_eq!(as_sets(&rounds[1].1), as_sets(&rounds[2].1));
}

#[test]
fn same_plan_gives_identical_logs() {
    let p = plan(Condition::Sot, mixed(10), 21);
    let a = run_simulation(&p).unwrap();
    let b = run_simulation(&p).unwrap();
    assert_eq!(
        sots::session::write_log(&a.records),
        sots::session::write_log(&b.records)
    );
    let c = run_simulation(&plan(Condition::Sot, mixed(10), 22)).unwrap();
    assert_ne!(a.records, c.records);
}

#[test]
fn under_minimum_batch_aborts() {
    let err = run_simulation(&plan(Condition::Sot, mixed(4), 1)).unwrap_err();
    assert!(matches!(
        err,
        SimError::Aborted(SessionError::BatchAborted { count: 4, min: 6 })
    ));
}

#[test]
fn plans_load_from_toml() {
    let p = SimulationPlan::from_toml(
        r#"
        master_seed = 9
        vote_bias = 1.0

        [strategies]
        play_to_win = 6
        random = 2

        [config]
        condition = "placebo"
        rounds = 2
        "#,
    )
    .unwrap();
    assert_eq!(p.batch_size(), 8);
    assert_eq!(p.config.condition, Condition::Placebo);
    let out = run_simulation(&p).unwrap();
    assert_eq!(out.state.fragments.len(), 2);
}
