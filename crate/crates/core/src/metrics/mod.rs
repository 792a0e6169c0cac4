//! Offline analysis of session event logs.

mod clusters;
mod network;
mod tables;
mod turn;

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

pub use clusters::{detect_clusters, Clustering};
pub use network::{cumulative_affinity, CumulativeAffinityNetwork, CumulativeEdge, RoundSnapshot};
pub use tables::{stability_win_table, CohortRow, StabilityWinTable, TeamStint, VoteRow};
pub use turn::{author_sequence, turn_taking_encoding, turn_taking_score, TurnTakingScore};

use crate::affinity::{AffinityError, UserId};
use crate::session::{Condition, EditOperation, Event, LogRecord, TeamId, TeamText};

/// How contribution segments are delimited, repeated in every report.
pub const SEGMENT_DEFINITION: &str =
    "a segment is a maximal run of consecutive server-ordered edit operations by one author";

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("turn-taking is defined for at most two authors, found {authors}")]
    Arity { authors: usize },
    #[error("log is empty")]
    EmptyLog,
    #[error("log does not start with a session_started record")]
    MissingStart,
    #[error("inconsistent log: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Affinity(#[from] AffinityError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionSummary {
    pub session: String,
    pub condition: Condition,
    pub participants: usize,
    pub rounds: u32,
    pub finalized: bool,
}

pub(crate) fn session_meta(log: &[LogRecord]) -> Result<SessionSummary, MetricsError> {
    let first = log.first().ok_or(MetricsError::EmptyLog)?;
    let Event::SessionStarted { config, roster, .. } = &first.event else {
        return Err(MetricsError::MissingStart);
    };
    Ok(SessionSummary {
        session: first.session.clone(),
        condition: config.condition,
        participants: roster.len(),
        rounds: config.rounds,
        finalized: log
            .iter()
            .any(|r| matches!(r.event, Event::SessionFinalized { .. })),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MetricsOptions {
    /// Seed for cluster detection.
    pub seed: u64,
    /// Splits same-author segments separated by a longer pause.
    pub gap_threshold_ms: Option<u64>,
    pub directed_clusters: bool,
}

/// Turn-taking for one team in one round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnRow {
    pub session: String,
    pub condition: Condition,
    pub round: u32,
    pub team: TeamId,
    pub members: String,
    /// Author ids, one per segment, space-separated.
    pub sequence: String,
    pub segments: usize,
    pub raw_sum: Option<i64>,
    pub normalized: Option<String>,
    pub normalized_value: Option<f64>,
    pub raw_per_length: Option<String>,
    pub story_chars: usize,
    pub chat_chars: usize,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClusterRow {
    pub session: String,
    pub condition: Condition,
    pub nodes: usize,
    pub clusters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionClusters {
    pub condition: Condition,
    pub sessions: usize,
    pub mean_clusters: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub segment_definition: String,
    pub sessions: Vec<SessionSummary>,
    pub turn_taking: Vec<TurnRow>,
    pub stability: StabilityWinTable,
    pub clusters: Vec<ClusterRow>,
    pub clusters_by_condition: Vec<ConditionClusters>,
    pub warnings: Vec<String>,
}

fn turn_rows(
    log: &[LogRecord],
    meta: &SessionSummary,
    gap_threshold_ms: Option<u64>,
) -> Vec<TurnRow> {
    let mut members: BTreeMap<(u32, TeamId), Vec<UserId>> = BTreeMap::new();
    let mut ops: BTreeMap<(u32, TeamId), Vec<EditOperation>> = BTreeMap::new();
    let mut chat: BTreeMap<(u32, TeamId), usize> = BTreeMap::new();
    for r in log {
        match &r.event {
            Event::TeamsFormed { assignment, .. } => {
                for (t, m) in assignment.teams.iter().enumerate() {
                    members.insert((r.round, t as TeamId), m.clone());
                }
            }
            Event::EditApplied { op, .. } => {
                ops.entry((r.round, op.team)).or_default().push(op.clone());
            }
            Event::ChatPosted { message } => {
                *chat.entry((r.round, message.team)).or_default() += message.text.chars().count();
            }
            _ => {}
        }
    }
    members
        .iter()
        .map(|(&(round, team), m)| {
            let mut team_ops = ops.remove(&(round, team)).unwrap_or_default();
            team_ops.sort_by_key(|o| o.server_order);
            let seq = author_sequence(&team_ops, gap_threshold_ms);
            let mut row = TurnRow {
                session: meta.session.clone(),
                condition: meta.condition,
                round,
                team,
                members: m.iter().map(|u| u.as_str()).collect::<Vec<_>>().join(" "),
                sequence: seq.iter().map(|u| u.as_str()).collect::<Vec<_>>().join(" "),
                segments: seq.len(),
                raw_sum: None,
                normalized: None,
                normalized_value: None,
                raw_per_length: None,
                story_chars: TeamText::replay(&team_ops).char_len(),
                chat_chars: chat.get(&(round, team)).copied().unwrap_or(0),
                note: None,
            };
            match turn_taking_score(&seq) {
                Ok(s) if s.length > 0 => {
                    row.raw_sum = Some(s.raw_sum);
                    row.normalized = Some(s.normalized.to_string());
                    row.normalized_value = Some(s.normalized_f64());
                    row.raw_per_length = Some(s.raw_per_length.to_string());
                }
                Ok(_) => row.note = Some("no edits".into()),
                Err(e) => row.note = Some(e.to_string()),
            }
            row
        })
        .collect()
}

/// Computes every table over one or more logs. Each log is clustered on its
/// own network; `clusters_by_condition` averages those counts.
pub fn metrics_report<L: AsRef<[LogRecord]>>(
    logs: &[L],
    options: MetricsOptions,
) -> Result<MetricsReport, MetricsError> {
    let mut sessions = Vec::new();
    let mut turn_taking = Vec::new();
    let mut clusters = Vec::new();
    let mut warnings = Vec::new();
    for log in logs {
        let log = log.as_ref();
        let meta = session_meta(log)?;
        turn_taking.extend(turn_rows(log, &meta, options.gap_threshold_ms));
        let net = cumulative_affinity(&[log])?;
        if net.nodes.is_empty() {
            warnings.push(format!("{}: no ballots to cluster", meta.session));
        } else {
            let c = detect_clusters(&net, options.seed, options.directed_clusters);
            if !c.converged {
                warnings.push(format!("{}: label propagation did not settle", meta.session));
            }
            clusters.push(ClusterRow {
                session: meta.session.clone(),
                condition: meta.condition,
                nodes: net.nodes.len(),
                clusters: c.count,
            });
        }
        if !meta.finalized {
            warnings.push(format!("{}: log ends before finalization", meta.session));
        }
        sessions.push(meta);
    }
    let mut conditions: Vec<Condition> = sessions.iter().map(|s| s.condition).collect();
    conditions.sort();
    conditions.dedup();
    if conditions.len() > 1 {
        warnings.push(format!(
            "stability and vote tables pool {} conditions",
            conditions.len()
        ));
    }
    let clusters_by_condition = conditions
        .iter()
        .filter_map(|&condition| {
            let counts: Vec<usize> = clusters
                .iter()
                .filter(|c| c.condition == condition)
                .map(|c| c.clusters)
                .collect();
            (!counts.is_empty()).then(|| ConditionClusters {
                condition,
                sessions: counts.len(),
                mean_clusters: counts.iter().sum::<usize>() as f64 / counts.len() as f64,
            })
        })
        .collect();
    Ok(MetricsReport {
        segment_definition: SEGMENT_DEFINITION.into(),
        sessions,
        turn_taking,
        stability: stability_win_table(logs)?,
        clusters,
        clusters_by_condition,
        warnings,
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()
}

impl MetricsReport {
    /// Writes plot-ready tables into `dir`, one CSV per table.
    pub fn write_csv_tables(&self, dir: &Path) -> io::Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let paths = [
            "turn_taking.csv",
            "stability_cohorts.csv",
            "team_stints.csv",
            "vote_concentration.csv",
            "clusters.csv",
        ]
        .map(|f| dir.join(f));
        write_csv(&paths[0], &self.turn_taking)?;
        write_csv(&paths[1], &self.stability.cohorts)?;
        write_csv(&paths[2], &self.stability.teams)?;
        write_csv(&paths[3], &self.stability.vote_concentration)?;
        write_csv(&paths[4], &self.clusters)?;
        Ok(paths.to_vec())
    }
}
