use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{AffinityError, Result, UserId};

/// Maximum number of extra candidates a ballot may name.
pub const MAX_CHOSEN: usize = 2;

/// One participant's teammate preferences for the next round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceBallot {
    pub voter: UserId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub previous_teammate: Option<UserId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stay_with_previous: Option<bool>,
    #[serde(default)]
    pub chosen: BTreeSet<UserId>,
}

impl PreferenceBallot {
    /// Ballot substituted for a participant who did not vote before the
    /// selection deadline: keep the previous teammate, name nobody else.
    pub fn default_for(voter: UserId, previous_teammate: Option<UserId>) -> Self {
        let stay_with_previous = previous_teammate.as_ref().map(|_| true);
        PreferenceBallot {
            voter,
            previous_teammate,
            stay_with_previous,
            chosen: BTreeSet::new(),
        }
    }

    /// Checks the structural invariants that do not depend on a roster.
    pub fn validate(&self) -> Result<()> {
        let reject = |reason: &str| AffinityError::InvalidBallot {
            voter: self.voter.clone(),
            reason: reason.to_owned(),
        };
        if self.previous_teammate.is_some() != self.stay_with_previous.is_some() {
            return Err(reject(
                "a stay decision is required exactly when a previous teammate exists",
            ));
        }
        if self.previous_teammate.as_ref() == Some(&self.voter) {
            return Err(reject("voter cannot be their own previous teammate"));
        }
        if self.chosen.contains(&self.voter) {
            return Err(reject("voter cannot choose themselves"));
        }
        if let Some(prev) = &self.previous_teammate {
            if self.chosen.contains(prev) {
                return Err(reject(
                    "the previous teammate is decided by the stay flag, not the chosen list",
                ));
            }
        }
        if self.chosen.len() > MAX_CHOSEN {
            return Err(reject("at most two candidates may be chosen"));
        }
        Ok(())
    }
}

/// Integer preference weight in `0..=3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct PreferenceWeight(u8);

impl PreferenceWeight {
    /// Worked with them and wants to leave.
    pub const LEAVE: Self = PreferenceWeight(0);
    /// Not named on the ballot.
    pub const UNCHOSEN: Self = PreferenceWeight(1);
    /// Named as a candidate teammate.
    pub const CHOSEN: Self = PreferenceWeight(2);
    /// Worked with them and wants to stay.
    pub const STAY: Self = PreferenceWeight(3);

    pub fn new(value: u8) -> Option<Self> {
        (value <= 3).then_some(PreferenceWeight(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for PreferenceWeight {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        PreferenceWeight::new(v).ok_or_else(|| format!("preference weight {v} outside 0..=3"))
    }
}

impl From<PreferenceWeight> for u8 {
    fn from(w: PreferenceWeight) -> u8 {
        w.0
    }
}

/// A voter's weight toward every other roster member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectedWeightVector {
    pub voter: UserId,
    pub weights: BTreeMap<UserId, PreferenceWeight>,
}

impl DirectedWeightVector {
    pub fn weight(&self, target: &UserId) -> Option<PreferenceWeight> {
        self.weights.get(target).copied()
    }

    /// Checks domain and value invariants against a roster.
    pub fn validate(&self, roster: &BTreeSet<UserId>) -> Result<()> {
        let reject = |reason: String| AffinityError::InvalidVector {
            voter: self.voter.clone(),
            reason,
        };
        if !roster.contains(&self.voter) {
            return Err(AffinityError::UnknownUser(self.voter.clone()));
        }
        if self.weights.contains_key(&self.voter) {
            return Err(reject("voter has a weight toward themselves".into()));
        }
        for target in self.weights.keys() {
            if !roster.contains(target) {
                return Err(AffinityError::UnknownUser(target.clone()));
            }
        }
        if self.weights.len() != roster.len() - 1 {
            return Err(reject(format!(
                "expected {} weights, found {}",
                roster.len() - 1,
                self.weights.len()
            )));
        }
        let count = |w| self.weights.values().filter(|&&v| v == w).count();
        if count(PreferenceWeight::STAY) > 1 {
            return Err(reject("more than one stay weight".into()));
        }
        if count(PreferenceWeight::LEAVE) > 1 {
            return Err(reject("more than one leave weight".into()));
        }
        Ok(())
    }
}

/// Turns a ballot into directed weights over the roster: stay 3, leave 0,
/// chosen 2, everyone else 1.
pub fn encode_ballot(
    ballot: &PreferenceBallot,
    roster: &BTreeSet<UserId>,
) -> Result<DirectedWeightVector> {
    ballot.validate()?;
    let known = |id: &UserId| {
        if roster.contains(id) {
            Ok(())
        } else {
            Err(AffinityError::UnknownUser(id.clone()))
        }
    };
    known(&ballot.voter)?;
    if let Some(prev) = &ballot.previous_teammate {
        known(prev)?;
    }
    for id in &ballot.chosen {
        known(id)?;
    }

    let weights = roster
        .iter()
        .filter(|id| **id != ballot.voter)
        .map(|id| {
            let w = if Some(id) == ballot.previous_teammate.as_ref() {
                match ballot.stay_with_previous {
                    Some(true) => PreferenceWeight::STAY,
                    _ => PreferenceWeight::LEAVE,
                }
            } else if ballot.chosen.contains(id) {
                PreferenceWeight::CHOSEN
            } else {
                PreferenceWeight::UNCHOSEN
            };
            (id.clone(), w)
        })
        .collect();
    Ok(DirectedWeightVector {
        voter: ballot.voter.clone(),
        weights,
    })
}
