//! The daily offline job: per-user history snapshots, item popularity and
//! an item-item co-occurrence similarity model, all computed from events
//! strictly before a cutoff.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::BatchConfig;
use crate::event_log::{self, Catalog, EventLogError, WatchEvent};
use crate::types::{
    format_entries, parse_entries, recency_order, round6, HistoryEntry, ItemId, Timestamp, UserId, DAY_S,
};

pub const SNAPSHOTS_FILE: &str = "snapshots.txt";
pub const SIMILARITY_FILE: &str = "similarity.txt";
pub const POPULARITY_FILE: &str = "popularity.txt";

#[derive(Debug, Error)]
pub enum BatchError {
    #[error(transparent)]
    Log(#[from] EventLogError),
    #[error("event references unknown item {0}")]
    UnknownItem(ItemId),
    #[error("cutoff must be positive, got {0}")]
    BadCutoff(Timestamp),
    #[error("history contains item {item} outside 0..{item_count}")]
    ItemOutOfRange { item: ItemId, item_count: usize },
    #[error("history lists item {0} twice")]
    DuplicateInHistory(ItemId),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {reason}")]
    Malformed { path: PathBuf, line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, BatchError>;

/// A user's watch history as of the last batch cutoff, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySnapshot {
    pub user_id: UserId,
    pub entries: Vec<HistoryEntry>,
    pub cutoff_ts: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SnapshotStore {
    snapshots: HashMap<UserId, HistorySnapshot>,
}

impl SnapshotStore {
    pub fn snapshot_for(&self, user: UserId) -> Option<&HistorySnapshot> {
        self.snapshots.get(&user)
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Snapshots ordered by user id.
    pub fn sorted(&self) -> Vec<&HistorySnapshot> {
        let mut v: Vec<_> = self.snapshots.values().collect();
        v.sort_by_key(|s| s.user_id);
        v
    }

    pub fn insert(&mut self, snapshot: HistorySnapshot) {
        self.snapshots.insert(snapshot.user_id, snapshot);
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in self.sorted() {
            let _ = writeln!(out, "{}|{}|{}", s.user_id, s.cutoff_ts, format_entries(&s.entries));
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut store = Self::default();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |reason: String| BatchError::Malformed {
                path: path.to_path_buf(),
                line: idx + 1,
                reason,
            };
            let parts: Vec<&str> = line.split('|').collect();
            if parts.len() != 3 {
                return Err(malformed("expected user|cutoff|entries".into()));
            }
            let user_id = parts[0].parse().map_err(|e| malformed(format!("user: {e}")))?;
            let cutoff_ts = parts[1].parse().map_err(|e| malformed(format!("cutoff: {e}")))?;
            let entries = parse_entries(parts[2]).map_err(malformed)?;
            store.insert(HistorySnapshot {
                user_id,
                entries,
                cutoff_ts,
            });
        }
        Ok(store)
    }
}

/// Top co-occurring neighbors per item, scores descending (ties by id).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimilarityModel {
    neighbors: Vec<Vec<(ItemId, f64)>>,
}

impl SimilarityModel {
    pub fn empty(item_count: usize) -> Self {
        Self {
            neighbors: vec![Vec::new(); item_count],
        }
    }

    pub fn neighbors(&self, item: ItemId) -> &[(ItemId, f64)] {
        self.neighbors.get(item.index()).map_or(&[], Vec::as_slice)
    }

    /// Score of `b` in `a`'s neighbor list, if present.
    pub fn score(&self, a: ItemId, b: ItemId) -> Option<f64> {
        self.neighbors(a).iter().find(|(n, _)| *n == b).map(|(_, s)| *s)
    }

    pub fn item_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.iter().all(Vec::is_empty)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (item, list) in self.neighbors.iter().enumerate() {
            let _ = write!(out, "{item}|");
            for (i, (n, s)) in list.iter().enumerate() {
                if i > 0 {
                    out.push(';');
                }
                let _ = write!(out, "{n}:{s:.6}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut neighbors = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |reason: String| BatchError::Malformed {
                path: path.to_path_buf(),
                line: idx + 1,
                reason,
            };
            let (item, rest) = line
                .split_once('|')
                .ok_or_else(|| malformed("expected item|neighbors".into()))?;
            let item: usize = item.parse().map_err(|e| malformed(format!("item: {e}")))?;
            if item != neighbors.len() {
                return Err(malformed(format!("items out of order at {item}")));
            }
            let list = if rest.is_empty() {
                Vec::new()
            } else {
                rest.split(';')
                    .map(|pair| {
                        let (n, s) = pair
                            .split_once(':')
                            .ok_or_else(|| malformed(format!("bad neighbor `{pair}`")))?;
                        Ok((
                            n.parse().map_err(|e| malformed(format!("neighbor: {e}")))?,
                            s.parse().map_err(|e| malformed(format!("score: {e}")))?,
                        ))
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            neighbors.push(list);
        }
        Ok(Self { neighbors })
    }
}

/// Event counts per item over the trailing popularity window.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PopularityTable {
    counts: Vec<u64>,
    /// Items with a nonzero count, by count descending then id ascending.
    ranked: Vec<ItemId>,
}

impl PopularityTable {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let mut ranked: Vec<ItemId> = counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(|(i, _)| ItemId(i as u32))
            .collect();
        ranked.sort_by(|a, b| counts[b.index()].cmp(&counts[a.index()]).then(a.cmp(b)));
        Self { counts, ranked }
    }

    pub fn count(&self, item: ItemId) -> u64 {
        self.counts.get(item.index()).copied().unwrap_or(0)
    }

    pub fn max_count(&self) -> u64 {
        self.ranked.first().map_or(0, |i| self.count(*i))
    }

    /// Count normalized by the table maximum; zero for an all-zero table.
    pub fn normalized(&self, item: ItemId) -> f64 {
        match self.max_count() {
            0 => 0.0,
            max => self.count(item) as f64 / max as f64,
        }
    }

    pub fn ranked(&self) -> &[ItemId] {
        &self.ranked
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{i},{c}");
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut counts = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |reason: String| BatchError::Malformed {
                path: path.to_path_buf(),
                line: idx + 1,
                reason,
            };
            let (item, count) = line
                .split_once(',')
                .ok_or_else(|| malformed("expected item,count".into()))?;
            let item: usize = item.parse().map_err(|e| malformed(format!("item: {e}")))?;
            if item != counts.len() {
                return Err(malformed(format!("items out of order at {item}")));
            }
            counts.push(count.parse().map_err(|e| malformed(format!("count: {e}")))?);
        }
        Ok(Self::from_counts(counts))
    }
}

/// Everything one batch run produces.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchArtifacts {
    pub cutoff_ts: Timestamp,
    pub snapshots: SnapshotStore,
    pub similarity: SimilarityModel,
    pub popularity: PopularityTable,
}

impl BatchArtifacts {
    /// Writes the three artifact files into `dir` and returns their paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let files = [
            (SNAPSHOTS_FILE, self.snapshots.to_text()),
            (SIMILARITY_FILE, self.similarity.to_text()),
            (POPULARITY_FILE, self.popularity.to_text()),
        ];
        files
            .into_iter()
            .map(|(name, text)| {
                let path = dir.join(name);
                std::fs::write(&path, text).map_err(|source| BatchError::Write {
                    path: path.clone(),
                    source,
                })?;
                Ok(path)
            })
            .collect()
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path)
                .map(|text| (text, path.clone()))
                .map_err(|source| BatchError::Read { path, source })
        };
        let (text, path) = read(SNAPSHOTS_FILE)?;
        let snapshots = SnapshotStore::parse(&text, &path)?;
        let (text, path) = read(SIMILARITY_FILE)?;
        let similarity = SimilarityModel::parse(&text, &path)?;
        let (text, path) = read(POPULARITY_FILE)?;
        let popularity = PopularityTable::parse(&text, &path)?;
        let cutoff_ts = snapshots.sorted().first().map_or(0, |s| s.cutoff_ts);
        Ok(Self {
            cutoff_ts,
            snapshots,
            similarity,
            popularity,
        })
    }
}

/// Reads the log and runs the batch job over events before `cutoff_ts`.
pub fn run_batch(
    log_path: &Path,
    catalog: &Catalog,
    cutoff_ts: Timestamp,
    config: &BatchConfig,
) -> Result<BatchArtifacts> {
    if cutoff_ts <= 0 {
        return Err(BatchError::BadCutoff(cutoff_ts));
    }
    let events = event_log::read_events(log_path, Timestamp::MIN, cutoff_ts)?;
    run_batch_events(&events, catalog, cutoff_ts, config)
}

/// Batch job over in-memory events; events at or after the cutoff are ignored.
pub fn run_batch_events(
    events: &[WatchEvent],
    catalog: &Catalog,
    cutoff_ts: Timestamp,
    config: &BatchConfig,
) -> Result<BatchArtifacts> {
    if cutoff_ts <= 0 {
        return Err(BatchError::BadCutoff(cutoff_ts));
    }
    let item_count = catalog.len();
    let pop_start = cutoff_ts - config.pop_days * DAY_S;
    let mut counts = vec![0u64; item_count];
    // user -> item -> latest (ts, weight)
    let mut latest: HashMap<UserId, HashMap<ItemId, (Timestamp, f64)>> = HashMap::new();
    for e in events.iter().filter(|e| e.timestamp < cutoff_ts) {
        if !catalog.contains(e.item_id) {
            return Err(BatchError::UnknownItem(e.item_id));
        }
        if e.timestamp >= pop_start {
            counts[e.item_id.index()] += 1;
        }
        let slot = latest
            .entry(e.user_id)
            .or_default()
            .entry(e.item_id)
            .or_insert((e.timestamp, e.completion_fraction));
        if e.timestamp >= slot.0 {
            *slot = (e.timestamp, e.completion_fraction);
        }
    }

    let mut snapshots = SnapshotStore::default();
    for (user_id, items) in latest {
        let mut entries: Vec<HistoryEntry> = items
            .into_iter()
            .map(|(item, (ts, w))| HistoryEntry::new(item, ts, w))
            .collect();
        entries.sort_by(recency_order);
        entries.truncate(config.k_batch);
        snapshots.insert(HistorySnapshot {
            user_id,
            entries,
            cutoff_ts,
        });
    }

    let histories: Vec<Vec<ItemId>> = snapshots
        .sorted()
        .into_iter()
        .map(|s| s.entries.iter().map(|e| e.item_id).collect())
        .collect();
    let similarity = cooccurrence_similarity(&histories, item_count, config.m_neighbors)?;

    Ok(BatchArtifacts {
        cutoff_ts,
        snapshots,
        similarity,
        popularity: PopularityTable::from_counts(counts),
    })
}

/// Cosine similarity over binary user-item incidence:
/// `cooc(a,b) / sqrt(count(a) * count(b))`, keeping the top `m_neighbors`
/// per item. Scores are rounded to six decimals.
pub fn cooccurrence_similarity(
    histories: &[Vec<ItemId>],
    item_count: usize,
    m_neighbors: usize,
) -> Result<SimilarityModel> {
    let mut postings: Vec<Vec<u32>> = vec![Vec::new(); item_count];
    let mut seen = vec![usize::MAX; item_count];
    for (h, history) in histories.iter().enumerate() {
        for &item in history {
            if item.index() >= item_count {
                return Err(BatchError::ItemOutOfRange { item, item_count });
            }
            if seen[item.index()] == h {
                return Err(BatchError::DuplicateInHistory(item));
            }
            seen[item.index()] = h;
            postings[item.index()].push(h as u32);
        }
    }

    let mut cooc = vec![0u32; item_count];
    let mut touched: Vec<usize> = Vec::new();
    let mut neighbors = Vec::with_capacity(item_count);
    for a in 0..item_count {
        for &h in &postings[a] {
            for &b in &histories[h as usize] {
                let b = b.index();
                if b == a {
                    continue;
                }
                if cooc[b] == 0 {
                    touched.push(b);
                }
                cooc[b] += 1;
            }
        }
        let count_a = postings[a].len() as f64;
        let mut scored: Vec<(ItemId, f64)> = touched
            .iter()
            .map(|&b| {
                let score = cooc[b] as f64 / (count_a * postings[b].len() as f64).sqrt();
                (ItemId(b as u32), round6(score))
            })
            .collect();
        for &b in &touched {
            cooc[b] = 0;
        }
        touched.clear();
        scored.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        scored.truncate(m_neighbors);
        neighbors.push(scored);
    }
    Ok(SimilarityModel { neighbors })
}
