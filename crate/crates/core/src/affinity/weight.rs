use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

/// An undirected affinity edge, stored exactly in half units.
///
/// The mean of two integer preference weights in `0..=3` is always a
/// multiple of one half, so `halves == w(u->v) + w(v->u)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct EdgeWeight {
    halves: u8,
}

impl EdgeWeight {
    pub const MAX_HALVES: u8 = 6;

    pub fn from_halves(halves: u8) -> Option<Self> {
        (halves <= Self::MAX_HALVES).then_some(EdgeWeight { halves })
    }

    /// Mean of the two directed weights.
    pub fn from_directed(forward: u8, backward: u8) -> Option<Self> {
        Self::from_halves(forward.checked_add(backward)?)
    }

    pub fn halves(self) -> u8 {
        self.halves
    }

    pub fn to_ratio(self) -> Ratio<u64> {
        Ratio::new(self.halves as u64, 2)
    }

    pub fn to_f64(self) -> f64 {
        self.halves as f64 / 2.0
    }
}

impl fmt::Display for EdgeWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.halves % 2 == 0 {
            write!(f, "{}", self.halves / 2)
        } else {
            write!(f, "{}.5", self.halves / 2)
        }
    }
}

impl Serialize for EdgeWeight {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.halves % 2 == 0 {
            s.serialize_u64(self.halves as u64 / 2)
        } else {
            s.serialize_f64(self.to_f64())
        }
    }
}

impl<'de> Deserialize<'de> for EdgeWeight {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let value = f64::deserialize(d)?;
        let halves = value * 2.0;
        if halves.fract() != 0.0 || !(0.0..=EdgeWeight::MAX_HALVES as f64).contains(&halves) {
            return Err(de::Error::custom(format!(
                "edge weight {value} is not a half-integer in [0, 3]"
            )));
        }
        Ok(EdgeWeight {
            halves: halves as u8,
        })
    }
}

/// Exact rational score (mean pairwise affinity, or a sum of such means).
///
/// Serialized as `"n/d"`, or as `"n"` when the denominator is one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Score(Ratio<u64>);

impl Score {
    pub fn new(numer: u64, denom: u64) -> Self {
        Score(Ratio::new(numer, denom))
    }

    pub fn zero() -> Self {
        Score(Ratio::from_integer(0))
    }

    pub fn from_integer(n: u64) -> Self {
        Score(Ratio::from_integer(n))
    }

    pub fn ratio(self) -> Ratio<u64> {
        self.0
    }

    pub fn numer(self) -> u64 {
        *self.0.numer()
    }

    pub fn denom(self) -> u64 {
        *self.0.denom()
    }

    pub fn to_f64(self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }
}

impl From<Ratio<u64>> for Score {
    fn from(r: Ratio<u64>) -> Self {
        Score(r)
    }
}

impl std::ops::Add for Score {
    type Output = Score;
    fn add(self, rhs: Score) -> Score {
        Score(self.0 + rhs.0)
    }
}

impl std::iter::Sum for Score {
    fn sum<I: Iterator<Item = Score>>(iter: I) -> Score {
        iter.fold(Score::zero(), |a, b| a + b)
    }
}

impl PartialOrd for Score {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Score {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.cmp(&other.0)
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self.0.denom() == 1 {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl FromStr for Score {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |p: &str| p.trim().parse::<u64>().map_err(|e| format!("bad score {s:?}: {e}"));
        match s.split_once('/') {
            Some((n, d)) => {
                let d = parse(d)?;
                if d == 0 {
                    return Err(format!("bad score {s:?}: zero denominator"));
                }
                Ok(Score::new(parse(n)?, d))
            }
            None => Ok(Score::from_integer(parse(s)?)),
        }
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_weight_serializes_as_plain_number() {
        let w = EdgeWeight::from_directed(2, 3).unwrap();
        assert_eq!(serde_json::to_string(&w).unwrap(), "2.5");
        let w = EdgeWeight::from_directed(3, 3).unwrap();
        assert_eq!(serde_json::to_string(&w).unwrap(), "3");
        let back: EdgeWeight = serde_json::from_str("1.5").unwrap();
        assert_eq!(back.halves(), 3);
        assert!(serde_json::from_str::<EdgeWeight>("1.25").is_err());
        assert!(serde_json::from_str::<EdgeWeight>("3.5").is_err());
    }

    #[test]
    fn score_round_trips_through_text() {
        let s = Score::new(14, 3);
        assert_eq!(s.to_string(), "14/3");
        assert_eq!("14/3".parse::<Score>().unwrap(), s);
        assert_eq!(Score::new(8, 2).to_string(), "4");
        assert!("1/0".parse::<Score>().is_err());
    }
}
