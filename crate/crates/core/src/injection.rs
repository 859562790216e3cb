//! Inference-time merge of the batch snapshot with the real-time window.
//!
//! The merged history has the same shape as a batch snapshot, so retrieval
//! and ranking consume it without knowing whether fresh events were injected.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::batch::HistorySnapshot;
use crate::realtime::RecentWindow;
use crate::types::{recency_order, HistoryEntry, ItemId, Timestamp, UserId};

#[derive(Debug, Error, PartialEq)]
pub enum InjectionError {
    #[error("user {0} has no experiment assignment")]
    UnknownUser(UserId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Batch,
    Recent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergedEntry {
    pub entry: HistoryEntry,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergedHistory {
    pub user_id: UserId,
    /// Newest first, unique items, at most `k_merge` long.
    pub entries: Vec<MergedEntry>,
}

impl MergedHistory {
    pub fn empty(user_id: UserId) -> Self {
        Self {
            user_id,
            entries: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn newest(&self) -> Option<&HistoryEntry> {
        self.entries.first().map(|m| &m.entry)
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.entries.iter().any(|m| m.entry.item_id == item)
    }

    pub fn history_entries(&self) -> impl Iterator<Item = &HistoryEntry> + '_ {
        self.entries.iter().map(|m| &m.entry)
    }
}

/// Union of snapshot and recent window, one entry per item (later timestamp
/// wins, recent wins ties), newest first, truncated to `k_merge`.
///
/// `recent` must already be TTL-filtered for `now`. An absent snapshot is
/// treated as empty.
pub fn merge_history(
    snapshot: Option<&HistorySnapshot>,
    recent: &RecentWindow,
    now: Timestamp,
    k_merge: usize,
) -> MergedHistory {
    debug_assert!(recent
        .entries
        .iter()
        .all(|e| e.timestamp <= now && now - e.timestamp <= recent.ttl_s));
    let batch: &[HistoryEntry] = snapshot.map_or(&[], |s| s.entries.as_slice());
    let recent_ts: HashMap<ItemId, Timestamp> = recent.entries.iter().map(|e| (e.item_id, e.timestamp)).collect();
    let batch_ts: HashMap<ItemId, Timestamp> = batch.iter().map(|e| (e.item_id, e.timestamp)).collect();

    let mut batch_iter = batch
        .iter()
        .filter(|e| recent_ts.get(&e.item_id).is_none_or(|&r| e.timestamp > r))
        .peekable();
    let mut recent_iter = recent
        .entries
        .iter()
        .filter(|e| batch_ts.get(&e.item_id).is_none_or(|&b| e.timestamp >= b))
        .peekable();

    let mut entries = Vec::with_capacity(k_merge.min(batch.len() + recent.entries.len()));
    while entries.len() < k_merge {
        let take_recent = match (recent_iter.peek(), batch_iter.peek()) {
            (Some(r), Some(b)) => recency_order(r, b).is_le(),
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => break,
        };
        let merged = if take_recent {
            MergedEntry {
                entry: *recent_iter.next().unwrap(),
                source: Source::Recent,
            }
        } else {
            MergedEntry {
                entry: *batch_iter.next().unwrap(),
                source: Source::Batch,
            }
        };
        entries.push(merged);
    }
    MergedHistory {
        user_id: recent.user_id,
        entries,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    Control,
    Treatment,
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::Control => "control",
            Arm::Treatment => "treatment",
        })
    }
}

impl FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "control" => Ok(Arm::Control),
            "treatment" => Ok(Arm::Treatment),
            other => Err(format!("unknown arm `{other}`")),
        }
    }
}

/// Salted hash of a user id mapped to `[0, 1)`.
pub fn hash_bucket(salt: &str, user: UserId) -> f64 {
    let digest = Sha256::new()
        .chain_update(salt.as_bytes())
        .chain_update(b":")
        .chain_update(user.0.to_le_bytes())
        .finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    // 53 high bits give an exactly representable fraction.
    (u64::from_be_bytes(head) >> 11) as f64 / (1u64 << 53) as f64
}

/// Fixed per-user arm table for one experiment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    arms: HashMap<UserId, Arm>,
}

impl Assignment {
    /// Users whose bucket falls below `treatment_share` go to treatment.
    pub fn hash_split(users: impl IntoIterator<Item = UserId>, salt: &str, treatment_share: f64) -> Self {
        let arms = users
            .into_iter()
            .map(|u| {
                let arm = if hash_bucket(salt, u) < treatment_share {
                    Arm::Treatment
                } else {
                    Arm::Control
                };
                (u, arm)
            })
            .collect();
        Self { arms }
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn count(&self, arm: Arm) -> usize {
        self.arms.values().filter(|a| **a == arm).count()
    }
}

pub fn select_arm(user: UserId, assignment: &Assignment) -> Result<Arm, InjectionError> {
    assignment
        .arms
        .get(&user)
        .copied()
        .ok_or(InjectionError::UnknownUser(user))
}
