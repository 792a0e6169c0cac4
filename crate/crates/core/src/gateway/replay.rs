//! Rebuilding a session from its log.
//!
//! Replay feeds every cause record (participant inputs, forced or timed
//! phase closes, reminders) to a fresh engine and checks that the engine
//! reproduces the following consequence records exactly.

use serde::Serialize;

use crate::session::{
    CloseReason, Event, FinalReport, LogRecord, SessionConfig, SessionEngine, SessionState,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Divergence {
    /// Position in the supplied log.
    pub index: usize,
    pub reason: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logged: Option<LogRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reproduced: Option<LogRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReplayReport {
    /// `None` when the log never started a session.
    pub state: Option<SessionState>,
    /// Records confirmed by the replay.
    pub applied: usize,
    /// True when the replay reached a finalized session without diverging.
    pub complete: bool,
    /// The log ended part-way through a batch of records.
    pub truncated: bool,
    pub divergence: Option<Divergence>,
    pub final_report: Option<FinalReport>,
}

impl ReplayReport {
    fn new() -> Self {
        ReplayReport {
            state: None,
            applied: 0,
            complete: false,
            truncated: false,
            divergence: None,
            final_report: None,
        }
    }
}

enum Check {
    Matched(usize),
    Truncated(usize),
    Diverged(Divergence),
}

fn check(log: &[LogRecord], start: usize, produced: &[LogRecord]) -> Check {
    if produced.is_empty() {
        return Check::Diverged(Divergence {
            index: start,
            reason: "the engine produced nothing for this record".into(),
            logged: log.get(start).cloned(),
            reproduced: None,
        });
    }
    for (offset, p) in produced.iter().enumerate() {
        let index = start + offset;
        match log.get(index) {
            None => return Check::Truncated(offset),
            Some(l) if l != p => {
                let reason = if l.seq != p.seq {
                    format!("expected seq {} but the log has {}", p.seq, l.seq)
                } else {
                    format!("logged {} differs from reproduced {}", l.event.type_name(), p.event.type_name())
                };
                return Check::Diverged(Divergence {
                    index,
                    reason,
                    logged: Some(l.clone()),
                    reproduced: Some(p.clone()),
                });
            }
            Some(_) => {}
        }
    }
    Check::Matched(produced.len())
}

/// Replays `log`. When `config` is given it must match the logged one.
pub fn replay_event_log(log: &[LogRecord], config: Option<&SessionConfig>) -> ReplayReport {
    let mut report = ReplayReport::new();
    let Some(first) = log.first() else {
        return report;
    };
    let diverge = |report: &mut ReplayReport, index: usize, reason: &str| {
        report.divergence = Some(Divergence {
            index,
            reason: reason.to_owned(),
            logged: log.get(index).cloned(),
            reproduced: None,
        });
    };
    let Event::SessionStarted {
        config: logged_config,
        roster,
        excluded,
    } = &first.event
    else {
        diverge(&mut report, 0, "the log does not begin with session_started");
        return report;
    };
    if config.is_some_and(|c| c != logged_config) {
        diverge(&mut report, 0, "the logged configuration differs from the supplied one");
        return report;
    }
    let (mut engine, produced) = match SessionEngine::start(
        first.session.clone(),
        logged_config.clone(),
        roster.clone(),
        excluded.clone(),
        first.at_ms,
    ) {
        Ok(started) => started,
        Err(e) => {
            diverge(&mut report, 0, &format!("the session cannot start: {e}"));
            return report;
        }
    };

    let mut produced = produced;
    let mut i = 0;
    loop {
        match check(log, i, &produced) {
            Check::Matched(n) => i += n,
            Check::Truncated(n) => {
                report.applied = i + n;
                report.truncated = true;
                break;
            }
            Check::Diverged(d) => {
                report.applied = i;
                report.divergence = Some(d);
                break;
            }
        }
        report.applied = i;
        let Some(cause) = log.get(i) else {
            break;
        };
        produced = match &cause.event {
            Event::PhaseClosed {
                reason: CloseReason::Forced,
                ..
            } => engine.advance_phase(cause.at_ms).unwrap_or_default(),
            Event::PhaseClosed {
                reason: CloseReason::Deadline,
                ..
            }
            | Event::Reminder { .. } => engine.tick(cause.at_ms),
            event => match event.as_input() {
                Some(input) => match engine.apply(input, cause.at_ms) {
                    Ok(records) => records,
                    Err(rejection) => rejection.record.into_iter().collect(),
                },
                None => {
                    diverge(
                        &mut report,
                        i,
                        &format!("{} is not explained by any earlier record", event.type_name()),
                    );
                    break;
                }
            },
        };
    }
    report.complete = report.divergence.is_none() && !report.truncated && engine.is_finalized();
    report.final_report = engine.final_report();
    report.state = Some(engine.into_state());
    report
}
