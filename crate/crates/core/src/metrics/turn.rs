//! Contribution segments and the turn-taking score.

use num_rational::Ratio;
use serde::{Serialize, Serializer};

use super::MetricsError;
use crate::session::EditOperation;

/// Splits server-ordered operations into contribution segments and returns
/// the author of each. A segment ends when the author changes, or, when
/// `gap_threshold_ms` is set, when more than that much time separates two
/// operations by the same author.
pub fn author_sequence<'a>(
    ops: impl IntoIterator<Item = &'a EditOperation>,
    gap_threshold_ms: Option<u64>,
) -> Vec<crate::affinity::UserId> {
    let mut out = Vec::new();
    let mut last: Option<&EditOperation> = None;
    for op in ops {
        let boundary = match last {
            None => true,
            Some(prev) => {
                prev.author != op.author
                    || gap_threshold_ms.is_some_and(|g| op.at_ms.saturating_sub(prev.at_ms) > g)
            }
        };
        if boundary {
            out.push(op.author.clone());
        }
        last = Some(op);
    }
    out
}

fn ratio_string<S: Serializer>(r: &Ratio<i64>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(r)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TurnTakingScore {
    pub encoding: Vec<i64>,
    pub raw_sum: i64,
    pub length: usize,
    /// `2 * raw_sum / (n * (n + 1))`, in [-1, 1].
    #[serde(serialize_with = "ratio_string")]
    pub normalized: Ratio<i64>,
    /// `raw_sum / n`, kept for comparison with per-length normalisation.
    #[serde(serialize_with = "ratio_string")]
    pub raw_per_length: Ratio<i64>,
}

impl TurnTakingScore {
    pub fn normalized_f64(&self) -> f64 {
        *self.normalized.numer() as f64 / *self.normalized.denom() as f64
    }
}

/// Signed segment encoding: the i-th segment by the first author is `-i`,
/// the j-th segment by the other author is `+j`.
pub fn turn_taking_encoding<L: PartialEq>(sequence: &[L]) -> Result<Vec<i64>, MetricsError> {
    let Some(first) = sequence.first() else {
        return Ok(Vec::new());
    };
    let second = sequence.iter().find(|l| *l != first);
    if let Some(second) = second {
        if sequence.iter().any(|l| l != first && l != second) {
            let mut distinct: Vec<&L> = Vec::new();
            for l in sequence {
                if !distinct.contains(&l) {
                    distinct.push(l);
                }
            }
            return Err(MetricsError::Arity {
                authors: distinct.len(),
            });
        }
    }
    let (mut a, mut b) = (0i64, 0i64);
    Ok(sequence
        .iter()
        .map(|l| {
            if l == first {
                a += 1;
                -a
            } else {
                b += 1;
                b
            }
        })
        .collect())
}

pub fn turn_taking_score<L: PartialEq>(sequence: &[L]) -> Result<TurnTakingScore, MetricsError> {
    let encoding = turn_taking_encoding(sequence)?;
    let raw_sum: i64 = encoding.iter().sum();
    let n = encoding.len() as i64;
    let (normalized, raw_per_length) = if n == 0 {
        (Ratio::from_integer(0), Ratio::from_integer(0))
    } else {
        (Ratio::new(2 * raw_sum, n * (n + 1)), Ratio::new(raw_sum, n))
    };
    Ok(TurnTakingScore {
        encoding,
        raw_sum,
        length: n as usize,
        normalized,
        raw_per_length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::Change;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    #[test]
    fn worked_sequence() {
        let s = turn_taking_score(&chars("ABABAAA")).unwrap();
        assert_eq!(s.encoding, vec![-1, 1, -2, 2, -3, -4, -5]);
        assert_eq!(s.raw_sum, -12);
        assert_eq!(s.normalized, Ratio::new(-3, 7));
        assert_eq!(s.raw_per_length, Ratio::new(-12, 7));
    }

    #[test]
    fn balanced_and_single_author_extremes() {
        assert_eq!(turn_taking_score(&chars("ABAB")).unwrap().normalized, Ratio::from_integer(0));
        assert_eq!(turn_taking_score(&chars("AAAA")).unwrap().raw_sum, -10);
        assert_eq!(turn_taking_score(&chars("AAAA")).unwrap().normalized, Ratio::from_integer(-1));
        assert_eq!(turn_taking_score(&chars("A")).unwrap().normalized, Ratio::from_integer(-1));
        assert_eq!(turn_taking_score::<char>(&[]).unwrap().length, 0);
    }

    #[test]
    fn three_authors_are_out_of_scope() {
        assert_eq!(
            turn_taking_score(&chars("ABCA")).unwrap_err(),
            MetricsError::Arity { authors: 3 }
        );
    }

    fn op(author: &str, at_ms: u64) -> EditOperation {
        EditOperation {
            team: 0,
            author: author.into(),
            change: Change::Insert {
                position: 0,
                text: "x".into(),
            },
            server_order: at_ms,
            at_ms,
        }
    }

    #[test]
    fn maximal_runs_form_segments() {
        let ops = [op("a", 1), op("a", 2), op("b", 3), op("a", 4)];
        let seq: Vec<String> = author_sequence(&ops, None).iter().map(|u| u.to_string()).collect();
        assert_eq!(seq, ["a", "b", "a"]);
        assert!(author_sequence(&[], None).is_empty());
    }

    #[test]
    fn gap_threshold_splits_long_pauses() {
        let ops = [op("a", 0), op("a", 100), op("a", 5_000)];
        assert_eq!(author_sequence(&ops, None).len(), 1);
        assert_eq!(author_sequence(&ops, Some(1_000)).len(), 2);
    }
}
