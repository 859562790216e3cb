//! Event and catalog schemas, synthetic catalog generation, and the
//! append-only line-delimited event log.
//!
//! Event log lines are `user_id,item_id,timestamp,watch_duration_s,completion_fraction`
//! with the completion fraction printed to six decimals. Catalog files start
//! with `genre_count=<G>` followed by `item_id,release_day,g1,...,gG` lines.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::types::{ItemId, Timestamp, UserId};

#[derive(Debug, Error)]
pub enum EventLogError {
    #[error("events are unsorted: timestamp {next} at position {index} follows {prev}")]
    Unsorted {
        index: usize,
        prev: Timestamp,
        next: Timestamp,
    },
    #[error("invalid event at position {index}: {reason}")]
    InvalidEvent { index: usize, reason: String },
    #[error("cannot write {path}: {source}")]
    Unwritable { path: PathBuf, source: io::Error },
    #[error("log file not found: {0}")]
    NotFound(PathBuf),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: malformed record: {reason}")]
    Malformed { path: PathBuf, line: usize, reason: String },
    #[error("invalid range: from_ts {from} > to_ts {to}")]
    InvalidRange { from: Timestamp, to: Timestamp },
    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),
}

pub type Result<T> = std::result::Result<T, EventLogError>;

/// One user-item interaction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WatchEvent {
    pub user_id: UserId,
    pub item_id: ItemId,
    pub timestamp: Timestamp,
    pub watch_duration_s: u64,
    pub completion_fraction: f64,
}

impl WatchEvent {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.timestamp < 0 {
            return Err(format!("negative timestamp {}", self.timestamp));
        }
        if !(0.0..=1.0).contains(&self.completion_fraction) {
            return Err(format!(
                "completion_fraction {} outside [0,1]",
                self.completion_fraction
            ));
        }
        Ok(())
    }

    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{:.6}",
            self.user_id, self.item_id, self.timestamp, self.watch_duration_s, self.completion_fraction
        )
    }

    pub fn parse_line(line: &str) -> std::result::Result<Self, String> {
        let mut fields = line.split(',');
        let mut next = |name: &str| {
            fields
                .next()
                .ok_or_else(|| format!("missing field {name}"))
                .map(str::trim)
        };
        let user = next("user_id")?;
        let item = next("item_id")?;
        let ts = next("timestamp")?;
        let dur = next("watch_duration_s")?;
        let comp = next("completion_fraction")?;
        if fields.next().is_some() {
            return Err("too many fields".into());
        }
        let event = WatchEvent {
            user_id: user.parse().map_err(|e| format!("user_id `{user}`: {e}"))?,
            item_id: item.parse().map_err(|e| format!("item_id `{item}`: {e}"))?,
            timestamp: ts.parse().map_err(|e| format!("timestamp `{ts}`: {e}"))?,
            watch_duration_s: dur.parse().map_err(|e| format!("watch_duration_s `{dur}`: {e}"))?,
            completion_fraction: comp.parse().map_err(|e| format!("completion_fraction `{comp}`: {e}"))?,
        };
        event.validate()?;
        Ok(event)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub item_id: ItemId,
    /// Unit L2 norm, at least one nonzero entry.
    pub genre_vector: Vec<f64>,
    pub release_day: i64,
}

impl Item {
    /// Genres with a nonzero affinity.
    pub fn active_genres(&self) -> impl Iterator<Item = usize> + '_ {
        self.genre_vector
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(g, _)| g)
    }

    /// Genre with the largest affinity, lowest index on ties.
    pub fn primary_genre(&self) -> usize {
        let mut best = 0;
        for (g, v) in self.genre_vector.iter().enumerate() {
            if *v > self.genre_vector[best] {
                best = g;
            }
        }
        best
    }
}

/// Items indexed by their id; ids are dense `0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    items: Vec<Item>,
    genre_count: usize,
}

impl Catalog {
    pub fn new(mut items: Vec<Item>, genre_count: usize) -> Result<Self> {
        items.sort_by_key(|i| i.item_id);
        for (idx, item) in items.iter().enumerate() {
            if item.item_id.index() != idx {
                return Err(EventLogError::InvalidCatalog(format!(
                    "item ids must be unique and dense from 0; found {} at position {idx}",
                    item.item_id
                )));
            }
            if item.genre_vector.len() != genre_count {
                return Err(EventLogError::InvalidCatalog(format!(
                    "item {} has {} genres, expected {genre_count}",
                    item.item_id,
                    item.genre_vector.len()
                )));
            }
            if item.genre_vector.iter().all(|v| *v == 0.0) {
                return Err(EventLogError::InvalidCatalog(format!(
                    "item {} has an all-zero genre vector",
                    item.item_id
                )));
            }
        }
        Ok(Self { items, genre_count })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn genre_count(&self) -> usize {
        self.genre_count
    }

    pub fn get(&self, id: ItemId) -> Option<&Item> {
        self.items.get(id.index())
    }

    pub fn contains(&self, id: ItemId) -> bool {
        id.index() < self.items.len()
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("genre_count={}\n", self.genre_count);
        for item in &self.items {
            out.push_str(&format!("{},{}", item.item_id, item.release_day));
            for v in &item.genre_vector {
                // `{}` prints the shortest representation that parses back exactly.
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|source| EventLogError::Unwritable {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let malformed = |line: usize, reason: String| EventLogError::Malformed {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| malformed(1, "missing genre_count header".into()))?;
        let genre_count: usize = header
            .strip_prefix("genre_count=")
            .and_then(|g| g.trim().parse().ok())
            .ok_or_else(|| malformed(1, format!("bad header `{header}`")))?;
        let mut items = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != genre_count + 2 {
                return Err(malformed(
                    lineno,
                    format!("expected {} fields, found {}", genre_count + 2, fields.len()),
                ));
            }
            let item_id = fields[0]
                .parse()
                .map_err(|e| malformed(lineno, format!("item_id: {e}")))?;
            let release_day = fields[1]
                .parse()
                .map_err(|e| malformed(lineno, format!("release_day: {e}")))?;
            let genre_vector = fields[2..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| malformed(lineno, format!("genre value: {e}")))?;
            items.push(Item {
                item_id,
                genre_vector,
                release_day,
            });
        }
        Self::new(items, genre_count)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| read_error(path, source))?;
        Self::parse(&text, path)
    }
}

/// Release days are drawn from `[0, RELEASE_WINDOW_DAYS)`.
pub const RELEASE_WINDOW_DAYS: i64 = 28;

/// Deterministic synthetic catalog: each item mixes one to three distinct
/// genres with random strengths, normalized to unit length.
pub fn generate_catalog(item_count: usize, genre_count: usize, seed: u64) -> Result<Catalog> {
    if item_count == 0 {
        return Err(EventLogError::InvalidCatalog("item_count must be at least 1".into()));
    }
    if genre_count < 2 {
        return Err(EventLogError::InvalidCatalog("genre_count must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items = (0..item_count)
        .map(|i| {
            let active = rng.gen_range(1..=3usize.min(genre_count));
            let mut vector = vec![0.0; genre_count];
            // The first sampled genre dominates so every item has a clear primary genre.
            for (rank, g) in sample(&mut rng, genre_count, active).into_iter().enumerate() {
                vector[g] = if rank == 0 { 1.0 } else { rng.gen_range(0.1..0.6) };
            }
            let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
            vector.iter_mut().for_each(|v| *v /= norm);
            Item {
                item_id: ItemId(i as u32),
                genre_vector: vector,
                release_day: rng.gen_range(0..RELEASE_WINDOW_DAYS),
            }
        })
        .collect();
    Catalog::new(items, genre_count)
}

fn read_error(path: &Path, source: io::Error) -> EventLogError {
    if source.kind() == io::ErrorKind::NotFound {
        EventLogError::NotFound(path.to_path_buf())
    } else {
        EventLogError::Read {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Timestamp of the last record in the log, if any.
fn last_timestamp(log_path: &Path) -> Result<Option<Timestamp>> {
    let mut file = match File::open(log_path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(read_error(log_path, e)),
    };
    let len = file.metadata().map_err(|e| read_error(log_path, e))?.len();
    file.seek(SeekFrom::Start(len.saturating_sub(4096)))
        .map_err(|e| read_error(log_path, e))?;
    let mut tail = String::new();
    file.read_to_string(&mut tail).map_err(|e| read_error(log_path, e))?;
    match tail.lines().rev().find(|l| !l.is_empty()) {
        None => Ok(None),
        Some(line) => WatchEvent::parse_line(line)
            .map(|e| Some(e.timestamp))
            .map_err(|reason| EventLogError::Malformed {
                path: log_path.to_path_buf(),
                line: 0,
                reason,
            }),
    }
}

/// Appends timestamp-sorted events to the log, one line each. Returns the
/// number written. An empty batch leaves the file untouched; a batch starting
/// before the log's last record is rejected.
pub fn append_events(log_path: &Path, events: &[WatchEvent]) -> Result<usize> {
    for (index, pair) in events.windows(2).enumerate() {
        if pair[1].timestamp < pair[0].timestamp {
            return Err(EventLogError::Unsorted {
                index: index + 1,
                prev: pair[0].timestamp,
                next: pair[1].timestamp,
            });
        }
    }
    for (index, e) in events.iter().enumerate() {
        e.validate()
            .map_err(|reason| EventLogError::InvalidEvent { index, reason })?;
    }
    if events.is_empty() {
        return Ok(0);
    }
    if let Some(prev) = last_timestamp(log_path)? {
        if events[0].timestamp < prev {
            return Err(EventLogError::Unsorted {
                index: 0,
                prev,
                next: events[0].timestamp,
            });
        }
    }
    let unwritable = |source| EventLogError::Unwritable {
        path: log_path.to_path_buf(),
        source,
    };
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(log_path)
        .map_err(unwritable)?;
    let mut w = BufWriter::new(file);
    for e in events {
        writeln!(w, "{}", e.to_line()).map_err(unwritable)?;
    }
    w.flush().map_err(unwritable)?;
    Ok(events.len())
}

/// Events with `from_ts <= timestamp < to_ts`, in file order.
pub fn read_events(log_path: &Path, from_ts: Timestamp, to_ts: Timestamp) -> Result<Vec<WatchEvent>> {
    if from_ts > to_ts {
        return Err(EventLogError::InvalidRange {
            from: from_ts,
            to: to_ts,
        });
    }
    let file = File::open(log_path).map_err(|e| read_error(log_path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| read_error(log_path, e))?;
        if line.is_empty() {
            continue;
        }
        let event = WatchEvent::parse_line(&line).map_err(|reason| EventLogError::Malformed {
            path: log_path.to_path_buf(),
            line: idx + 1,
            reason,
        })?;
        if event.timestamp >= from_ts && event.timestamp < to_ts {
            out.push(event);
        }
    }
    Ok(out)
}

/// Every event in the log.
pub fn read_all(log_path: &Path) -> Result<Vec<WatchEvent>> {
    read_events(log_path, Timestamp::MIN, Timestamp::MAX)
}

/// Distinct users appearing in a sequence of events, ascending.
pub fn users_in(events: &[WatchEvent]) -> Vec<UserId> {
    let set: HashSet<UserId> = events.iter().map(|e| e.user_id).collect();
    let mut users: Vec<_> = set.into_iter().collect();
    users.sort();
    users
}
