//! In-process real-time feature store: per-user windows of the newest
//! watches, bounded by capacity and TTL.
//!
//! Each user's window sits behind its own map shard lock, so operations on
//! one user are linearizable and operations on different users proceed
//! independently. TTL is applied lazily on every read; [`RealtimeStore::evict_expired`]
//! is an optional sweep that never changes what a read at the same or a
//! later clock returns.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use dashmap::DashMap;
use thiserror::Error;

use crate::config::StoreConfig;
use crate::event_log::WatchEvent;
use crate::types::{format_entries, recency_order, HistoryEntry, ItemId, Timestamp, UserId};

#[derive(Debug, Error, PartialEq)]
pub enum RealtimeError {
    #[error("rejected event: {0}")]
    InvalidEvent(String),
}

/// A user's recent watches as seen at one clock value, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct RecentWindow {
    pub user_id: UserId,
    pub entries: Vec<HistoryEntry>,
    pub ttl_s: i64,
}

impl RecentWindow {
    pub fn empty(user_id: UserId, ttl_s: i64) -> Self {
        Self {
            user_id,
            entries: Vec::new(),
            ttl_s,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Returned once an event is applied; any later read observes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestAck {
    pub sequence: u64,
}

#[derive(Debug, Default)]
struct Window {
    /// Sorted newest first, unique items.
    entries: Vec<HistoryEntry>,
}

impl Window {
    fn apply(&mut self, entry: HistoryEntry, cap: usize) {
        if let Some(pos) = self.entries.iter().position(|e| e.item_id == entry.item_id) {
            if self.entries[pos].timestamp > entry.timestamp {
                return;
            }
            self.entries.remove(pos);
        }
        let at = self.entries.partition_point(|e| recency_order(e, &entry).is_lt());
        self.entries.insert(at, entry);
        self.entries.truncate(cap);
    }
}

#[inline]
fn visible(e: &HistoryEntry, now: Timestamp, ttl_s: i64) -> bool {
    e.timestamp <= now && now - e.timestamp <= ttl_s
}

#[derive(Debug)]
pub struct RealtimeStore {
    config: StoreConfig,
    windows: DashMap<UserId, Window>,
    ingested: AtomicU64,
}

impl RealtimeStore {
    pub fn new(config: StoreConfig) -> Self {
        Self {
            config,
            windows: DashMap::new(),
            ingested: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn ingest(&self, event: &WatchEvent) -> Result<IngestAck, RealtimeError> {
        event.validate().map_err(RealtimeError::InvalidEvent)?;
        let entry = HistoryEntry::new(event.item_id, event.timestamp, event.completion_fraction);
        self.windows
            .entry(event.user_id)
            .or_default()
            .apply(entry, self.config.r_cap);
        let sequence = self.ingested.fetch_add(1, Ordering::AcqRel) + 1;
        Ok(IngestAck { sequence })
    }

    /// Entries with `timestamp <= now` and `now - timestamp <= ttl_s`.
    pub fn get_recent(&self, user_id: UserId, now: Timestamp) -> RecentWindow {
        let ttl_s = self.config.ttl_s;
        let entries = self
            .windows
            .get(&user_id)
            .map(|w| w.entries.iter().filter(|e| visible(e, now, ttl_s)).copied().collect())
            .unwrap_or_default();
        RecentWindow {
            user_id,
            entries,
            ttl_s,
        }
    }

    /// Physically drops entries older than the TTL at `now`. Returns how many.
    pub fn evict_expired(&self, now: Timestamp) -> usize {
        let ttl_s = self.config.ttl_s;
        let mut evicted = 0;
        self.windows.retain(|_, w| {
            let before = w.entries.len();
            w.entries.retain(|e| now - e.timestamp <= ttl_s);
            evicted += before - w.entries.len();
            !w.entries.is_empty()
        });
        evicted
    }

    /// Total ingests acknowledged so far.
    pub fn ingested(&self) -> u64 {
        self.ingested.load(Ordering::Acquire)
    }

    pub fn total_entries(&self) -> usize {
        self.windows.iter().map(|w| w.entries.len()).sum()
    }

    pub fn user_count(&self) -> usize {
        self.windows.len()
    }

    pub fn contains(&self, user_id: UserId, item_id: ItemId, now: Timestamp) -> bool {
        self.get_recent(user_id, now)
            .entries
            .iter()
            .any(|e| e.item_id == item_id)
    }

    /// Diagnostic dump, one `user_id|now|item:ts:weight;...` line per user
    /// with a non-empty window at `now`.
    pub fn dump(&self, now: Timestamp) -> String {
        let mut users: Vec<UserId> = self.windows.iter().map(|w| *w.key()).collect();
        users.sort();
        let mut out = String::new();
        for user in users {
            let window = self.get_recent(user, now);
            if !window.is_empty() {
                let _ = writeln!(out, "{}|{}|{}", user, now, format_entries(&window.entries));
            }
        }
        out
    }
}

impl Default for RealtimeStore {
    fn default() -> Self {
        Self::new(StoreConfig::default())
    }
}
