use std::fmt;
use std::str::FromStr;

/// Simulated clock, integer seconds since epoch.
pub type Timestamp = i64;

pub const DAY_S: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId(pub u32);

/// Catalog items are numbered densely from zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ItemId(pub u32);

impl ItemId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

macro_rules! id_impls {
    ($t:ident) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }

        impl FromStr for $t {
            type Err = std::num::ParseIntError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                s.trim().parse().map($t)
            }
        }
    };
}

id_impls!(UserId);
id_impls!(ItemId);

/// One watched item inside a history, as stored by both the batch snapshot
/// and the real-time window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub item_id: ItemId,
    pub timestamp: Timestamp,
    pub weight: f64,
}

impl HistoryEntry {
    pub fn new(item_id: ItemId, timestamp: Timestamp, weight: f64) -> Self {
        Self {
            item_id,
            timestamp,
            weight,
        }
    }
}

/// Newest first, ties by item id ascending.
#[inline]
pub fn recency_order(a: &HistoryEntry, b: &HistoryEntry) -> std::cmp::Ordering {
    b.timestamp.cmp(&a.timestamp).then_with(|| a.item_id.cmp(&b.item_id))
}

/// Exponential recency decay `0.5^(age / halflife)`. Negative ages count as zero.
#[inline]
pub fn decay(age_s: i64, halflife_s: i64) -> f64 {
    let age = age_s.max(0) as f64;
    0.5f64.powf(age / halflife_s as f64)
}

/// Round to six decimals so that values survive the text formats exactly.
#[inline]
pub fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

#[inline]
pub fn round9(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// Formats history entries as `item:ts:weight;...`, shared by the snapshot
/// store file and the real-time store dump.
pub fn format_entries(entries: &[HistoryEntry]) -> String {
    let mut out = String::with_capacity(entries.len() * 24);
    for (i, e) in entries.iter().enumerate() {
        if i > 0 {
            out.push(';');
        }
        out.push_str(&format!("{}:{}:{:.6}", e.item_id, e.timestamp, e.weight));
    }
    out
}

pub fn parse_entries(s: &str) -> Result<Vec<HistoryEntry>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|part| {
            let mut it = part.split(':');
            let (Some(item), Some(ts), Some(w), None) = (it.next(), it.next(), it.next(), it.next()) else {
                return Err(format!("bad history entry `{part}`"));
            };
            Ok(HistoryEntry {
                item_id: item.parse().map_err(|e| format!("item id `{item}`: {e}"))?,
                timestamp: ts.parse().map_err(|e| format!("timestamp `{ts}`: {e}"))?,
                weight: w.parse().map_err(|e| format!("weight `{w}`: {e}"))?,
            })
        })
        .collect()
}
