use std::collections::{HashMap, HashSet};

use freshrec::batch::{cooccurrence_similarity, PopularityTable};
use freshrec::config::RetrievalConfig;
use freshrec::injection::{MergedEntry, MergedHistory, Source};
use freshrec::retrieval::{build_candidates, Origin};
use freshrec::{HistoryEntry, ItemId, UserId, DAY_S};
use proptest::prelude::*;

const ITEMS: u32 = 40;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn candidates_match_union_oracle(
        others in prop::collection::vec(prop::collection::hash_set(0u32..ITEMS, 1..10), 1..30),
        hist in prop::collection::hash_map(0u32..ITEMS, 0i64..20 * DAY_S, 0..15),
        counts in prop::collection::vec(0u64..6, ITEMS as usize),
        h_seed in 1usize..6,
        m_primary in 1usize..30,
        m_pop in 0usize..15,
        c_max in 1usize..40,
    ) {
        let histories: Vec<Vec<ItemId>> = others.into_iter().map(|s| s.into_iter().map(ItemId).collect()).collect();
        let sim = cooccurrence_similarity(&histories, ITEMS as usize, 6).unwrap();
        let pop = PopularityTable::from_counts(counts.clone());
        let mut entries: Vec<HistoryEntry> = hist.into_iter().map(|(i, t)| HistoryEntry::new(ItemId(i), t, 1.0)).collect();
        entries.sort_by(|a, b| b.timestamp.cmp(&a.timestamp).then(a.item_id.cmp(&b.item_id)));
        let history = MergedHistory {
            user_id: UserId(0),
            entries: entries.iter().map(|&entry| MergedEntry { entry, source: Source::Batch }).collect(),
        };
        let now = 21 * DAY_S;
        let cfg = RetrievalConfig { h_seed, m_primary, m_pop, c_max, halflife_s: 7 * DAY_S };
        let got = build_candidates(&history, &sim, &pop, now, &cfg);

        let watched: HashSet<ItemId> = entries.iter().map(|e| e.item_id).collect();
        let mut primary: HashMap<ItemId, f64> = HashMap::new();
        for seed in entries.iter().take(h_seed) {
            let w = 0.5f64.powf((now - seed.timestamp) as f64 / (7 * DAY_S) as f64);
            for &(n, s) in sim.neighbors(seed.item_id) {
                if !watched.contains(&n) {
                    *primary.entry(n).or_default() += s * w;
                }
            }
        }
        let mut primary: Vec<(ItemId, f64)> = primary.into_iter().collect();
        primary.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        primary.truncate(m_primary);
        let mut popular: Vec<ItemId> = (0..ITEMS).map(ItemId).filter(|i| counts[i.index()] > 0 && !watched.contains(i)).collect();
        popular.sort_by(|a, b| counts[b.index()].cmp(&counts[a.index()]).then(a.cmp(b)));
        popular.truncate(m_pop);
        let mut want: Vec<(ItemId, Origin)> = primary.iter().map(|p| (p.0, Origin::Primary)).collect();
        for p in popular {
            if !primary.iter().any(|q| q.0 == p) {
                want.push((p, Origin::Popularity));
            }
        }
        want.truncate(c_max);

        let shape: Vec<(ItemId, Origin)> = got.candidates.iter().map(|c| (c.item_id, c.origin)).collect();
        prop_assert_eq!(shape, want);
        for (c, p) in got.candidates.iter().zip(&primary) {
            if c.origin == Origin::Primary {
                prop_assert!((c.recall_score - p.1).abs() < 1e-12);
            }
        }
    }
}
