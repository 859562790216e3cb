//! Candidate generation: an item-item recaller seeded by the newest history
//! entries, plus a popularity recaller to widen the pool.

use std::collections::HashMap;

use crate::batch::{PopularityTable, SimilarityModel};
use crate::config::RetrievalConfig;
use crate::injection::MergedHistory;
use crate::types::{decay, ItemId, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Primary,
    Popularity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub item_id: ItemId,
    pub recall_score: f64,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.candidates.iter().map(|c| c.item_id)
    }
}

/// Items already in the history, sorted for lookup.
struct Watched(Vec<ItemId>);

impl Watched {
    fn of(history: &MergedHistory) -> Self {
        let mut items: Vec<ItemId> = history.history_entries().map(|e| e.item_id).collect();
        items.sort_unstable();
        Self(items)
    }

    fn contains(&self, item: ItemId) -> bool {
        self.0.binary_search(&item).is_ok()
    }
}

fn by_score_then_id(a: &(ItemId, f64), b: &(ItemId, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Scores each neighbor `c` of the `h_seed` newest history items by
/// `sum(sim(h, c) * decay(now - h.ts))`, drops watched items and keeps the
/// top `limit`.
pub fn primary_recall(
    history: &MergedHistory,
    sim: &SimilarityModel,
    now: Timestamp,
    limit: usize,
    config: &RetrievalConfig,
) -> Vec<(ItemId, f64)> {
    let watched = Watched::of(history);
    let mut scores: HashMap<ItemId, f64> = HashMap::new();
    let mut order: Vec<ItemId> = Vec::new();
    for seed in history.history_entries().take(config.h_seed) {
        let weight = decay(now - seed.timestamp, config.halflife_s);
        for &(item, s) in sim.neighbors(seed.item_id) {
            if watched.contains(item) {
                continue;
            }
            let slot = scores.entry(item).or_insert_with(|| {
                order.push(item);
                0.0
            });
            *slot += s * weight;
        }
    }
    let mut out: Vec<(ItemId, f64)> = order.into_iter().map(|i| (i, scores[&i])).collect();
    out.sort_by(by_score_then_id);
    out.truncate(limit);
    out
}

/// Most popular unwatched items with nonzero counts, scored by count over
/// the table maximum.
pub fn popularity_recall(pop: &PopularityTable, history: &MergedHistory, limit: usize) -> Vec<(ItemId, f64)> {
    let watched = Watched::of(history);
    pop.ranked()
        .iter()
        .filter(|i| !watched.contains(**i))
        .take(limit)
        .map(|&i| (i, pop.normalized(i)))
        .collect()
}

/// Primary candidates first, then popularity candidates not already
/// present, capped at `c_max`.
pub fn build_candidates(
    history: &MergedHistory,
    sim: &SimilarityModel,
    pop: &PopularityTable,
    now: Timestamp,
    config: &RetrievalConfig,
) -> CandidateSet {
    let primary = primary_recall(history, sim, now, config.m_primary, config);
    let popular = popularity_recall(pop, history, config.m_pop);
    let mut candidates: Vec<Candidate> = primary
        .iter()
        .map(|&(item_id, recall_score)| Candidate {
            item_id,
            recall_score,
            origin: Origin::Primary,
        })
        .collect();
    for (item_id, recall_score) in popular {
        if !primary.iter().any(|(p, _)| *p == item_id) {
            candidates.push(Candidate {
                item_id,
                recall_score,
                origin: Origin::Popularity,
            });
        }
    }
    candidates.truncate(config.c_max);
    CandidateSet { candidates }
}
