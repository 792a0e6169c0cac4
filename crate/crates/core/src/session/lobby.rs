//! Batch gating: deciding when enough participants have arrived to start.

use serde::{Deserialize, Serialize};

use super::{RosterEntry, SessionConfig, SessionError};
use crate::affinity::UserId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registration {
    pub user: UserId,
    pub username: String,
    pub at_ms: u64,
}

impl Registration {
    fn entry(&self) -> RosterEntry {
        RosterEntry {
            user: self.user.clone(),
            username: self.username.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GateDecision {
    /// Keep waiting; the lobby times out at `until_ms`.
    Waiting { until_ms: Option<u64> },
    Admit {
        admitted: Vec<RosterEntry>,
        excluded: Vec<RosterEntry>,
    },
    Abort(SessionError),
}

/// Applies the batch rule to `registrations` (in arrival order) at `now_ms`.
///
/// The batch starts as soon as `batch_max` participants are present, or when
/// `max_wait_ms` has elapsed since the first arrival with at least
/// `batch_min` present. Dyad sessions need an even roster, so an odd batch
/// leaves out its latest arrival. Arrivals past the cap are never admitted.
pub fn gate_batch(registrations: &[Registration], config: &SessionConfig, now_ms: u64) -> GateDecision {
    let Some(first) = registrations.first() else {
        return GateDecision::Waiting { until_ms: None };
    };
    let timeout = first.at_ms + config.max_wait_ms;
    let count = registrations.len();
    if count < config.batch_max && now_ms < timeout {
        return GateDecision::Waiting {
            until_ms: Some(timeout),
        };
    }
    if count < config.batch_min {
        return GateDecision::Abort(SessionError::BatchAborted {
            count,
            min: config.batch_min,
        });
    }
    let mut take = count.min(config.batch_max);
    if config.team_size == 2 && take % 2 == 1 {
        take -= 1;
    }
    GateDecision::Admit {
        admitted: registrations[..take].iter().map(Registration::entry).collect(),
        excluded: registrations[take..].iter().map(Registration::entry).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arrivals(n: usize) -> Vec<Registration> {
        (0..n)
            .map(|i| Registration {
                user: UserId::new(format!("p{i:02}")),
                username: format!("user{i}"),
                at_ms: i as u64 * 1000,
            })
            .collect()
    }

    #[test]
    fn cap_admits_everyone() {
        let cfg = SessionConfig::default();
        match gate_batch(&arrivals(12), &cfg, 11_000) {
            GateDecision::Admit { admitted, excluded } => {
                assert_eq!(admitted.len(), 12);
                assert!(excluded.is_empty());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn odd_batch_at_timeout_drops_latest() {
        let cfg = SessionConfig::default();
        let regs = arrivals(9);
        assert!(matches!(
            gate_batch(&regs, &cfg, 10_000),
            GateDecision::Waiting { until_ms: Some(300_000) }
        ));
        match gate_batch(&regs, &cfg, 300_000) {
            GateDecision::Admit { admitted, excluded } => {
                assert_eq!(admitted.len(), 8);
                assert_eq!(excluded.len(), 1);
                assert_eq!(excluded[0].user, regs[8].user);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn too_few_at_timeout_aborts() {
        let cfg = SessionConfig::default();
        assert_eq!(
            gate_batch(&arrivals(4), &cfg, 300_000),
            GateDecision::Abort(SessionError::BatchAborted { count: 4, min: 6 })
        );
    }
}
