//! One check per headline criterion. Each prints a PASS/FAIL line; the test
//! fails if any check fails.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sots::affinity::{
    brute_force_assign, build_affinity_graph, encode_ballot, greedy_assign, PreferenceBallot,
    Score, TeamAssignment, UserId,
};
use sots::gateway::replay_event_log;
use sots::metrics::{
    cumulative_affinity, detect_clusters, stability_win_table, turn_taking_score,
};
use sots::seed;
use sots::session::{
    Condition, Event, FormationMethod, LogRecord, Phase, RosterEntry, SessionConfig,
};
use sots::sim::{run_simulation, AgentStrategy, SimulationPlan, StrategyMix};

type Check = Result<String, String>;

fn ids(names: &[&str]) -> BTreeSet<UserId> {
    names.iter().map(|n| UserId::from(*n)).collect()
}

fn ballot(voter: &str, prev: Option<(&str, bool)>, chosen: &[&str]) -> PreferenceBallot {
    PreferenceBallot {
        voter: voter.into(),
        previous_teammate: prev.map(|(p, _)| p.into()),
        stay_with_previous: prev.map(|(_, s)| s),
        chosen: chosen.iter().map(|c| UserId::from(*c)).collect(),
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn encoding() -> Check {
    let roster = ids(&["A", "B", "C", "D"]);
    let cases: [(PreferenceBallot, [(&str, u8); 3]); 3] = [
        (ballot("A", Some(("C", true)), &["B"]), [("B", 2), ("C", 3), ("D", 1)]),
        (ballot("A", Some(("C", false)), &[]), [("B", 1), ("C", 0), ("D", 1)]),
        (ballot("A", None, &["B", "D"]), [("B", 2), ("C", 1), ("D", 2)]),
    ];
    for (b, expected) in &cases {
        let v = encode_ballot(b, &roster).map_err(|e| e.to_string())?;
        let got: Vec<(String, u8)> = v.weights.iter().map(|(k, w)| (k.to_string(), w.value())).collect();
        let want: Vec<(String, u8)> = expected.iter().map(|(k, w)| (k.to_string(), *w)).collect();
        ensure(got == want, || format!("{b:?}: got {got:?}, want {want:?}"))?;
    }
    Ok("stay 3, leave 0, chosen 2, unchosen 1 on {A,B,C,D}".into())
}

/// Independent optimum: recursive enumeration of perfect matchings over the
/// raw half-weight matrix.
fn oracle_best(halves: &[Vec<u64>], free: &mut Vec<bool>) -> u64 {
    let Some(i) = free.iter().position(|f| *f) else {
        return 0;
    };
    free[i] = false;
    let mut best = 0;
    for j in i + 1..free.len() {
        if free[j] {
            free[j] = false;
            best = best.max(halves[i][j] + oracle_best(halves, free));
            free[j] = true;
        }
    }
    free[i] = true;
    best
}

fn random_ballots(rng: &mut ChaCha8Rng, users: &[UserId]) -> Vec<PreferenceBallot> {
    // a previous round's pairing, then random stay and choices
    let mut order: Vec<usize> = (0..users.len()).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut prev = vec![0; users.len()];
    for pair in order.chunks(2) {
        prev[pair[0]] = pair[1];
        prev[pair[1]] = pair[0];
    }
    let first_round = rng.random_bool(0.2);
    (0..users.len())
        .map(|i| {
            let mut chosen = BTreeSet::new();
            for _ in 0..rng.random_range(0..=2) {
                let j = rng.random_range(0..users.len());
                if j != i && (first_round || j != prev[i]) {
                    chosen.insert(users[j].clone());
                }
            }
            PreferenceBallot {
                voter: users[i].clone(),
                previous_teammate: (!first_round).then(|| users[prev[i]].clone()),
                stay_with_previous: (!first_round).then(|| rng.random_bool(0.5)),
                chosen,
            }
        })
        .collect()
}

fn matching() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut instances = 0;
    let mut mutual_pairs = 0;
    let mut worst = Ratio::new(1u64, 1);
    for n in [6usize, 8, 10] {
        for inst in 0..70u64 {
            let users: Vec<UserId> = (0..n).map(|i| UserId::new(format!("u{i:02}"))).collect();
            let roster: BTreeSet<UserId> = users.iter().cloned().collect();
            let ballots = random_ballots(&mut rng, &users);
            let vectors: Vec<_> = ballots
                .iter()
                .map(|b| encode_ballot(b, &roster))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            let graph = build_affinity_graph(&vectors, &roster).map_err(|e| e.to_string())?;
            let a = greedy_assign(&graph, 2, inst).map_err(|e| e.to_string())?;
            ensure(a.is_partition_of(&roster) && a.teams.iter().all(|t| t.len() == 2), || {
                format!("n={n} #{inst}: not a perfect matching: {a:?}")
            })?;
            // independent edge weights from the raw directed vectors
            let w = |i: usize, j: usize| -> u64 {
                u64::from(vectors[i].weights[&users[j]].value())
                    + u64::from(vectors[j].weights[&users[i]].value())
            };
            let halves: Vec<Vec<u64>> =
                (0..n).map(|i| (0..n).map(|j| if i == j { 0 } else { w(i, j) }).collect()).collect();
            for i in 0..n {
                for j in i + 1..n {
                    if halves[i][j] == 6 {
                        mutual_pairs += 1;
                        ensure(a.team_of(&users[i]) == a.team_of(&users[j]), || {
                            format!("n={n} #{inst}: mutual pair {i},{j} split")
                        })?;
                    }
                }
            }
            let greedy: u64 = a
                .teams
                .iter()
                .map(|t| {
                    let (i, j) = (users.iter().position(|u| *u == t[0]).unwrap(), users.iter().position(|u| *u == t[1]).unwrap());
                    halves[i][j]
                })
                .sum();
            let best = oracle_best(&halves, &mut vec![true; n]);
            let exact = brute_force_assign(&graph, 2).map_err(|e| e.to_string())?;
            ensure(exact.total_score(&graph).unwrap() == Score::new(best, 2), || {
                format!("n={n} #{inst}: brute force disagrees with the enumeration oracle")
            })?;
            ensure(2 * greedy >= best, || {
                format!("n={n} #{inst}: greedy {greedy} below half of optimum {best}")
            })?;
            if best > 0 {
                worst = worst.min(Ratio::new(greedy, best));
            }
            instances += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{instances} instances, {mutual_pairs} mutual pairs kept, worst greedy/optimum {worst}, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn turn_taking() -> Check {
    let s = turn_taking_score(&"ABABAAA".chars().collect::<Vec<_>>()).map_err(|e| e.to_string())?;
    ensure(s.encoding == [-1, 1, -2, 2, -3, -4, -5], || format!("encoding {:?}", s.encoding))?;
    ensure(s.raw_sum == -12, || format!("raw {}", s.raw_sum))?;
    ensure(s.normalized == Ratio::new(-3, 7), || format!("normalized {}", s.normalized))?;
    let abab = turn_taking_score(&['A', 'B', 'A', 'B']).unwrap();
    ensure(abab.normalized == Ratio::from_integer(0), || format!("ABAB {}", abab.normalized))?;
    let solo = turn_taking_score(&['A', 'A', 'A', 'A']).unwrap();
    ensure(solo.normalized == Ratio::from_integer(-1), || format!("AAAA {}", solo.normalized))?;
    Ok("ABABAAA -> -12, -3/7; ABAB -> 0; AAAA -> -1".into())
}

fn plan(condition: Condition, mix: StrategyMix, seed: u64) -> SimulationPlan {
    SimulationPlan {
        config: SessionConfig {
            condition,
            rounds: 3,
            ..SessionConfig::default()
        },
        strategies: mix,
        master_seed: seed,
        text_seed: seed ^ 0x5eed,
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

fn reward_cap() -> Check {
    for s in 0..50u64 {
        let mut p = plan(Condition::NoAgency, StrategyMix::uniform(AgentStrategy::Random, 8), s);
        p.vote_bias = 1.0;
        let out = run_simulation(&p).map_err(|e| e.to_string())?;
        // wins counted from the log, independently of the engine's ledger
        let mut wins: BTreeMap<UserId, u64> =
            out.state.roster.iter().map(|r| (r.user.clone(), 0)).collect();
        let mut teams: BTreeMap<u32, Vec<Vec<UserId>>> = BTreeMap::new();
        for r in &out.records {
            match &r.event {
                Event::TeamsFormed { assignment, .. } => {
                    teams.insert(r.round, assignment.teams.clone());
                }
                Event::VotesTallied { winner, .. } => {
                    for u in &teams[&r.round][*winner as usize] {
                        *wins.get_mut(u).unwrap() += 1;
                    }
                }
                _ => {}
            }
        }
        let balance: BTreeMap<UserId, u64> = out
            .report
            .leaderboard
            .iter()
            .map(|e| (e.user.clone(), e.reward_balance))
            .collect();
        for (u, w) in &wins {
            ensure(balance[u] == 5 + 5 * w, || format!("seed {s}: {u} won {w}, holds {}", balance[u]))?;
        }
        let triple = wins.iter().find(|(_, w)| **w == 3);
        let never = wins.iter().find(|(_, w)| **w == 0);
        if let (Some((t, _)), Some((z, _))) = (triple, never) {
            ensure(balance[t] == 20 && balance[z] == 5, || "cap".into())?;
            ensure(balance.values().all(|b| *b <= 20), || "balance above 20".into())?;
            return Ok(format!("seed {s}: {t} won 3 rounds -> 20, {z} never won -> 5"));
        }
    }
    Err("no seed produced a three-time winner".into())
}

fn teams_by_round(records: &[LogRecord]) -> BTreeMap<u32, (FormationMethod, u64, TeamAssignment)> {
    records
        .iter()
        .filter_map(|r| match &r.event {
            Event::TeamsFormed {
                method,
                seed,
                assignment,
            } => Some((r.round, (*method, *seed, assignment.clone()))),
            _ => None,
        })
        .collect()
}

fn conditions() -> Check {
    let mut notes = Vec::new();
    for (i, condition) in [Condition::NoAgency, Condition::Placebo, Condition::Sot].into_iter().enumerate() {
        let start = Instant::now();
        let out = run_simulation(&plan(condition, mixed(8), 100 + i as u64)).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        ensure(elapsed < Duration::from_secs(10), || format!("{condition:?} took {elapsed:?}"))?;
        let teams = teams_by_round(&out.records);
        ensure(teams.len() == 3, || format!("{condition:?}: {} formations", teams.len()))?;
        let ballots: BTreeMap<u32, Vec<PreferenceBallot>> = out
            .records
            .iter()
            .filter_map(|r| match &r.event {
                Event::BallotsClosed { ballots, .. } => Some((r.round, ballots.clone())),
                _ => None,
            })
            .collect();
        let submitted = out
            .records
            .iter()
            .filter(|r| matches!(r.event, Event::BallotSubmitted { .. }))
            .count();
        let first = &teams[&1].2;
        match condition {
            Condition::NoAgency => {
                ensure(teams.values().all(|t| t.2 == *first), || "NoAgency teams changed".into())?;
                ensure(ballots.is_empty() && submitted == 0, || "NoAgency logged ballots".into())?;
            }
            Condition::Placebo => {
                ensure(teams.values().all(|t| t.2 == *first), || "Placebo teams changed".into())?;
                ensure(submitted > 0 && ballots.len() >= 2, || "Placebo ballots missing".into())?;
                ensure(teams.values().all(|t| t.0 == FormationMethod::FixedRandom), || {
                    "Placebo used ballots".into()
                })?;
            }
            Condition::Sot => {
                for (round, (_, logged_seed, assignment)) in &teams {
                    let expected_seed = seed::derive(out.state.config.seed, seed::purpose::MATCHING, *round as u64);
                    ensure(*logged_seed == expected_seed, || format!("round {round}: seed mismatch"))?;
                    let b = &ballots[round];
                    let roster: BTreeSet<UserId> = b.iter().map(|x| x.voter.clone()).collect();
                    let vectors: Vec<_> = b
                        .iter()
                        .map(|x| encode_ballot(x, &roster))
                        .collect::<Result<_, _>>()
                        .map_err(|e| e.to_string())?;
                    let graph = build_affinity_graph(&vectors, &roster).map_err(|e| e.to_string())?;
                    let again = greedy_assign(&graph, out.state.config.team_size, expected_seed)
                        .map_err(|e| e.to_string())?;
                    ensure(
                        serde_json::to_string(&again).unwrap() == serde_json::to_string(assignment).unwrap(),
                        || format!("round {round}: recomputed teams differ"),
                    )?;
                }
            }
        }
        notes.push(format!("{condition:?} {:.0}ms", elapsed.as_secs_f64() * 1000.0));
    }
    Ok(notes.join(", "))
}

fn replay() -> Check {
    let all = [Condition::Sot, Condition::Placebo, Condition::NoAgency];
    for s in 0..20u64 {
        let condition = all[s as usize % 3];
        let n = 6 + 2 * (s as usize % 4);
        let out = run_simulation(&plan(condition, mixed(n), 1_000 + s)).map_err(|e| e.to_string())?;
        let report = replay_event_log(&out.records, Some(&out.state.config));
        ensure(report.divergence.is_none() && report.complete, || {
            format!("seed {s}: {:?}", report.divergence)
        })?;
        let live = serde_json::to_string(&out.state).unwrap();
        let replayed = serde_json::to_string(report.state.as_ref().unwrap()).unwrap();
        ensure(live == replayed, || format!("seed {s}: states differ"))?;
    }
    Ok("20 sessions across three conditions, byte-identical states".into())
}

fn vote_concentration() -> Check {
    let mut notes = Vec::new();
    for s in [7u64, 8, 9] {
        let mix = StrategyMix {
            play_to_win: 6,
            random: 2,
            ..StrategyMix::default()
        };
        let out = run_simulation(&plan(Condition::Sot, mix, s)).map_err(|e| e.to_string())?;
        let table = stability_win_table(&[out.records]).map_err(|e| e.to_string())?;
        for round in [2, 3] {
            let row = table.vote_row(round).ok_or(format!("seed {s}: no round {round} row"))?;
            ensure(row.winners_ahead(), || format!("seed {s} round {round}: {row:?}"))?;
            notes.push(format!(
                "s{s}r{round} {:.2}>{:.2}",
                row.winner_mean_votes.unwrap(),
                row.non_winner_mean_votes.unwrap()
            ));
        }
    }
    Ok(notes.join(" "))
}

fn record(round: u32, event: Event) -> LogRecord {
    LogRecord {
        v: 1,
        seq: 0,
        session: "constructed".into(),
        round,
        phase: Phase::TeammateSelection,
        at_ms: 0,
        event,
    }
}

fn constructed_log(rounds: &[Vec<PreferenceBallot>]) -> Vec<LogRecord> {
    let roster = ["A", "B", "C", "D"]
        .iter()
        .map(|u| RosterEntry {
            user: (*u).into(),
            username: u.to_lowercase(),
        })
        .collect();
    let mut log = vec![record(
        1,
        Event::SessionStarted {
            config: SessionConfig::default(),
            roster,
            excluded: vec![],
        },
    )];
    for (i, b) in rounds.iter().enumerate() {
        log.push(record(
            i as u32 + 1,
            Event::BallotsClosed {
                ballots: b.clone(),
                defaulted: vec![],
                used: true,
            },
        ));
    }
    log
}

fn clustering() -> Check {
    let pairs = constructed_log(&[
        vec![
            ballot("A", None, &["B"]),
            ballot("B", None, &["A"]),
            ballot("C", None, &["D"]),
            ballot("D", None, &["C"]),
        ],
        vec![
            ballot("A", Some(("B", true)), &["C"]),
            ballot("B", Some(("A", true)), &[]),
            ballot("C", Some(("D", true)), &["B"]),
            ballot("D", Some(("C", true)), &[]),
        ],
        vec![
            ballot("A", Some(("B", true)), &[]),
            ballot("B", Some(("A", true)), &["D"]),
            ballot("C", Some(("D", true)), &[]),
            ballot("D", Some(("C", true)), &[]),
        ],
    ]);
    let uniform = constructed_log(&[
        ["A", "B", "C", "D"].iter().map(|u| ballot(u, None, &[])).collect(),
        ["A", "B", "C", "D"].iter().map(|u| ballot(u, None, &[])).collect(),
    ]);
    let pair_net = cumulative_affinity(&[&pairs]).map_err(|e| e.to_string())?;
    let uni_net = cumulative_affinity(&[&uniform]).map_err(|e| e.to_string())?;
    for directed in [false, true] {
        let a = detect_clusters(&pair_net, 11, directed);
        ensure(a.count == 2, || format!("pairs gave {} clusters (directed {directed})", a.count))?;
        ensure(a == detect_clusters(&pair_net, 11, directed), || "not deterministic".into())?;
        let u = detect_clusters(&uni_net, 11, directed);
        ensure(u.count == 1, || format!("uniform gave {} clusters (directed {directed})", u.count))?;
    }
    // cumulative weights worked by hand: A-B 2+3+3, A-C 1+1.5+1
    let w = |a: &str, b: &str| pair_net.weight(&a.into(), &b.into());
    ensure(w("A", "B") == Score::from_integer(8), || format!("A-B {}", w("A", "B")))?;
    ensure(w("A", "C") == Score::new(7, 2), || format!("A-C {}", w("A", "C")))?;
    Ok("pairs -> 2, uniform -> 1, repeatable under seed".into())
}

#[test]
fn acceptance() {
    let checks: [(&str, fn() -> Check); 8] = [
        ("preference encoding", encoding),
        ("matching vs oracle", matching),
        ("turn-taking", turn_taking),
        ("reward cap", reward_cap),
        ("condition conformance", conditions),
        ("replay determinism", replay),
        ("vote concentration", vote_concentration),
        ("clustering", clustering),
    ];
    let mut failed = Vec::new();
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                println!("FAIL {name}: {why}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
