//! Synthetic viewers: genre preferences, intra-day drift and a cascade
//! click model.

use rand::Rng;

use crate::event_log::{Catalog, Item};
use crate::ranking::RankedList;
use crate::types::{ItemId, UserId, DAY_S};

/// Probability mass put on the new dominant genre after a drift.
pub const DRIFT_DOMINANCE: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub user_id: UserId,
    /// Non-negative, sums to one.
    pub base_preference: Vec<f64>,
    pub drift_probability: f64,
    /// Preference after `drift_time` on the current day.
    pub active_preference: Vec<f64>,
    /// Second of the day at which the drift takes hold.
    pub drift_time: Option<i64>,
}

impl UserProfile {
    /// `dominance` of the mass goes to one random genre, the rest is spread
    /// with random weights over the others.
    pub fn random<R: Rng>(
        user_id: UserId,
        genre_count: usize,
        dominance: f64,
        drift_probability: f64,
        rng: &mut R,
    ) -> Self {
        let dominant = rng.gen_range(0..genre_count);
        let rest: Vec<f64> = (0..genre_count)
            .map(|g| if g == dominant { 0.0 } else { rng.gen::<f64>() })
            .collect();
        let total: f64 = rest.iter().sum();
        let mut base = vec![0.0; genre_count];
        for (g, slot) in base.iter_mut().enumerate() {
            *slot = if g == dominant {
                dominance
            } else if total > 0.0 {
                (1.0 - dominance) * rest[g] / total
            } else {
                (1.0 - dominance) / (genre_count - 1) as f64
            };
        }
        Self {
            user_id,
            active_preference: base.clone(),
            base_preference: base,
            drift_probability,
            drift_time: None,
        }
    }

    pub fn dominant_genre(&self) -> usize {
        argmax(&self.base_preference)
    }

    /// The mixture in force at `second_of_day`.
    pub fn preference_at(&self, second_of_day: i64) -> &[f64] {
        match self.drift_time {
            Some(t) if second_of_day >= t => &self.active_preference,
            _ => &self.base_preference,
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Draws the day's drift: with the profile's drift probability a new
/// dominant genre takes [`DRIFT_DOMINANCE`] of the mass from a uniform time
/// of day onward; otherwise the base preference holds all day.
pub fn drift_user<R: Rng>(profile: &UserProfile, rng: &mut R) -> UserProfile {
    let mut next = profile.clone();
    let g = profile.base_preference.len();
    if rng.gen_bool(profile.drift_probability) {
        let current = profile.dominant_genre();
        let mut target = rng.gen_range(0..g - 1);
        if target >= current {
            target += 1;
        }
        let spread = (1.0 - DRIFT_DOMINANCE) / (g - 1) as f64;
        next.active_preference = (0..g)
            .map(|i| if i == target { DRIFT_DOMINANCE } else { spread })
            .collect();
        next.drift_time = Some(rng.gen_range(0..DAY_S));
    } else {
        next.active_preference = profile.base_preference.clone();
        next.drift_time = None;
    }
    next
}

/// `dot(preference, genre_vector)` clamped to `[0, 1]`.
pub fn relevance(preference: &[f64], item: &Item) -> f64 {
    preference
        .iter()
        .zip(&item.genre_vector)
        .map(|(p, v)| p * v)
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// Cascade scan: the item at zero-based rank `r` is clicked with probability
/// `relevance * discount^r`; the scan stops at the first click. One uniform
/// draw is consumed per examined rank.
pub fn choice_model<R: Rng>(
    list: &RankedList,
    preference: &[f64],
    catalog: &Catalog,
    position_discount: f64,
    rng: &mut R,
) -> Option<(usize, ItemId)> {
    let mut examine = 1.0;
    for (rank, entry) in list.entries.iter().enumerate() {
        let rel = catalog
            .get(entry.item_id)
            .map_or(0.0, |item| relevance(preference, item));
        let p = rel * examine;
        if rng.gen::<f64>() < p {
            return Some((rank, entry.item_id));
        }
        examine *= position_discount;
    }
    None
}

/// Exact probability that [`choice_model`] clicks something.
pub fn click_probability(relevances: &[f64], position_discount: f64) -> f64 {
    let mut miss = 1.0;
    let mut examine = 1.0;
    for r in relevances {
        miss *= 1.0 - r.clamp(0.0, 1.0) * examine;
        examine *= position_discount;
    }
    1.0 - miss
}

/// Index of items by primary genre, for self-directed watching.
#[derive(Debug, Clone)]
pub struct GenreIndex {
    by_genre: Vec<Vec<ItemId>>,
}

impl GenreIndex {
    pub fn new(catalog: &Catalog) -> Self {
        let mut by_genre = vec![Vec::new(); catalog.genre_count()];
        for item in catalog.items() {
            by_genre[item.primary_genre()].push(item.item_id);
        }
        Self { by_genre }
    }

    /// Uniform item whose primary genre is the preference's heaviest.
    pub fn sample_dominant<R: Rng>(&self, preference: &[f64], rng: &mut R) -> ItemId {
        let pool = &self.by_genre[argmax(preference)];
        if pool.is_empty() {
            return self.sample(preference, rng);
        }
        pool[rng.gen_range(0..pool.len())]
    }

    /// Genre drawn from `preference`, then a uniform item of that genre.
    pub fn sample<R: Rng>(&self, preference: &[f64], rng: &mut R) -> ItemId {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut genre = preference.len() - 1;
        for (g, p) in preference.iter().enumerate() {
            acc += p;
            if u < acc {
                genre = g;
                break;
            }
        }
        let pool = if self.by_genre[genre].is_empty() {
            // fall back to the whole catalog
            self.by_genre
                .iter()
                .find(|v| !v.is_empty())
                .expect("catalog is non-empty")
        } else {
            &self.by_genre[genre]
        };
        pool[rng.gen_range(0..pool.len())]
    }
}
