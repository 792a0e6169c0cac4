//! Shared team text with server-order serialization.
//!
//! Clients send edits against the version they last saw. The server rebases
//! each edit over operations it has applied since, then applies it and
//! assigns the next server order. Applying the stored operations in order
//! always reproduces the canonical text.

use serde::{Deserialize, Serialize};

use super::{SessionError, TeamId};
use crate::affinity::UserId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Change {
    Insert { position: usize, text: String },
    Delete { position: usize, len: usize },
}

impl Change {
    pub fn position(&self) -> usize {
        match self {
            Change::Insert { position, .. } | Change::Delete { position, .. } => *position,
        }
    }

    pub fn is_insert(&self) -> bool {
        matches!(self, Change::Insert { .. })
    }
}

/// An edit as submitted by a client. `base_version` is the number of
/// operations in the team log the client had applied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditRequest {
    pub base_version: usize,
    #[serde(flatten)]
    pub change: Change,
}

/// An applied edit, positions already rebased onto the canonical text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditOperation {
    pub team: TeamId,
    pub author: UserId,
    #[serde(flatten)]
    pub change: Change,
    pub server_order: u64,
    pub at_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeamText {
    pub text: String,
    pub ops: Vec<EditOperation>,
}

fn char_len(s: &str) -> usize {
    s.chars().count()
}

fn byte_offset(s: &str, chars: usize) -> usize {
    s.char_indices().nth(chars).map_or(s.len(), |(b, _)| b)
}

/// Length of `[a0, a1)` intersected with `[b0, b1)`.
fn overlap(a0: usize, a1: usize, b0: usize, b1: usize) -> usize {
    a1.min(b1).saturating_sub(a0.max(b0))
}

fn rebase(mut change: Change, applied: &[EditOperation]) -> Change {
    for prior in applied {
        change = match (change, &prior.change) {
            (Change::Insert { position, text }, Change::Insert { position: q, text: t }) => {
                let position = if *q <= position { position + char_len(t) } else { position };
                Change::Insert { position, text }
            }
            (Change::Insert { position, text }, Change::Delete { position: q, len: l }) => {
                let position = position - overlap(*q, q + l, 0, position);
                Change::Insert { position, text }
            }
            (Change::Delete { position, len }, Change::Insert { position: q, text: t }) => {
                let inserted = char_len(t);
                if *q <= position {
                    Change::Delete { position: position + inserted, len }
                } else if *q < position + len {
                    Change::Delete { position, len: len + inserted }
                } else {
                    Change::Delete { position, len }
                }
            }
            (Change::Delete { position, len }, Change::Delete { position: q, len: l }) => {
                let before = overlap(*q, q + l, 0, position);
                let inside = overlap(*q, q + l, position, position + len);
                Change::Delete {
                    position: position - before,
                    len: len - inside,
                }
            }
        };
    }
    change
}

impl TeamText {
    pub fn version(&self) -> usize {
        self.ops.len()
    }

    pub fn char_len(&self) -> usize {
        char_len(&self.text)
    }

    /// Rebases `request` onto the current text and clamps it to the text
    /// bounds. Returns the change that would be applied.
    pub fn resolve(&self, request: &EditRequest) -> Result<Change, SessionError> {
        if request.base_version > self.ops.len() {
            return Err(SessionError::Validation(format!(
                "edit based on version {} but the text is at version {}",
                request.base_version,
                self.ops.len()
            )));
        }
        let len = self.char_len();
        if let Change::Insert { text, .. } = &request.change {
            if text.is_empty() {
                return Err(SessionError::Validation("empty insert".into()));
            }
        }
        let rebased = rebase(request.change.clone(), &self.ops[request.base_version..]);
        let clamped = match rebased {
            Change::Insert { position, text } => Change::Insert {
                position: position.min(len),
                text,
            },
            Change::Delete { position, len: n } => {
                let start = position.min(len);
                Change::Delete {
                    position: start,
                    len: n.min(len - start),
                }
            }
        };
        if matches!(clamped, Change::Delete { len: 0, .. }) {
            return Err(SessionError::Validation("edit has no effect".into()));
        }
        Ok(clamped)
    }

    /// Applies an already-resolved operation.
    pub fn apply(&mut self, op: EditOperation) {
        match &op.change {
            Change::Insert { position, text } => {
                let at = byte_offset(&self.text, *position);
                self.text.insert_str(at, text);
            }
            Change::Delete { position, len } => {
                let start = byte_offset(&self.text, *position);
                let end = byte_offset(&self.text, position + len);
                self.text.replace_range(start..end, "");
            }
        }
        self.ops.push(op);
    }

    /// Author of every character of the canonical text, in order.
    pub fn attribution(&self) -> Vec<UserId> {
        let mut authors: Vec<UserId> = Vec::new();
        for op in &self.ops {
            match &op.change {
                Change::Insert { position, text } => {
                    let at = (*position).min(authors.len());
                    let n = char_len(text);
                    authors.splice(at..at, std::iter::repeat_n(op.author.clone(), n));
                }
                Change::Delete { position, len } => {
                    let start = (*position).min(authors.len());
                    let end = (position + len).min(authors.len());
                    authors.drain(start..end);
                }
            }
        }
        authors
    }

    /// Characters of the canonical text attributed to `author`.
    pub fn chars_by(&self, author: &UserId) -> usize {
        self.attribution().iter().filter(|a| *a == author).count()
    }

    /// Rebuilds the text from the operation log alone.
    pub fn replay(ops: &[EditOperation]) -> TeamText {
        let mut t = TeamText::default();
        for op in ops {
            t.apply(op.clone());
        }
        t
    }
}
