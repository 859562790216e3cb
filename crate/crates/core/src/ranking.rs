//! Feature construction and the frozen logistic ranker.
//!
//! Training and serving build features through the same [`UserContext`], so
//! whatever history reaches it (batch-only or merged) is model-ready.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::batch::PopularityTable;
use crate::event_log::{Catalog, Item};
use crate::injection::MergedHistory;
use crate::retrieval::CandidateSet;
use crate::types::{decay, round9, ItemId, Timestamp, UserId, DAY_S};

pub const FEATURE_DIM: usize = 8;

pub const SLOT_NAMES: [&str; FEATURE_DIM] = [
    "affinity",
    "genre_overlap",
    "popularity_norm",
    "recency_of_history",
    "candidate_age",
    "hour_of_day_sin",
    "hour_of_day_cos",
    "bias",
];

pub const AFFINITY: usize = 0;
pub const GENRE_OVERLAP: usize = 1;
pub const POPULARITY_NORM: usize = 2;
pub const RECENCY_OF_HISTORY: usize = 3;
pub const CANDIDATE_AGE: usize = 4;
pub const HOUR_SIN: usize = 5;
pub const HOUR_COS: usize = 6;
pub const BIAS: usize = 7;

pub const MIN_TRAINING_IMPRESSIONS: usize = 100;

#[derive(Debug, Error)]
pub enum RankingError {
    #[error("model has {found} weights, features have {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("insufficient training data: {0} impressions, need at least {MIN_TRAINING_IMPRESSIONS}")]
    InsufficientData(usize),
    #[error("candidate {0} is not in the catalog")]
    UnknownCandidate(ItemId),
    #[error("non-finite weight for {0}")]
    NonFinite(String),
    #[error("{path}:{line}: {reason}")]
    Malformed { path: PathBuf, line: usize, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, RankingError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub values: [f64; FEATURE_DIM],
}

impl FeatureVector {
    pub fn get(&self, slot: usize) -> f64 {
        self.values[slot]
    }
}

/// Per-request aggregates of the history, shared by all candidates.
#[derive(Debug, Clone)]
pub struct UserContext {
    /// Decay-weighted mean genre vector of the history; all zeros when empty.
    profile: Vec<f64>,
    newest_genres: Vec<usize>,
    recency_of_history: f64,
    now: Timestamp,
    halflife_s: i64,
    genre_count: usize,
}

impl UserContext {
    pub fn new(history: &MergedHistory, catalog: &Catalog, now: Timestamp, halflife_s: i64) -> Self {
        let g = catalog.genre_count();
        let mut profile = vec![0.0; g];
        let mut total = 0.0;
        for e in history.history_entries() {
            let Some(item) = catalog.get(e.item_id) else {
                continue;
            };
            let w = decay(now - e.timestamp, halflife_s);
            total += w;
            for (p, v) in profile.iter_mut().zip(&item.genre_vector) {
                *p += w * v;
            }
        }
        if total > 0.0 {
            profile.iter_mut().for_each(|p| *p /= total);
        }
        let (newest_genres, recency_of_history) = match history.newest() {
            Some(newest) => (
                catalog
                    .get(newest.item_id)
                    .map(|i| i.active_genres().collect())
                    .unwrap_or_default(),
                decay(now - newest.timestamp, halflife_s),
            ),
            None => (Vec::new(), 0.0),
        };
        Self {
            profile,
            newest_genres,
            recency_of_history,
            now,
            halflife_s,
            genre_count: g,
        }
    }

    pub fn features(&self, candidate: &Item, pop: &PopularityTable) -> FeatureVector {
        let affinity = self
            .profile
            .iter()
            .zip(&candidate.genre_vector)
            .map(|(p, v)| p * v)
            .sum();
        let shared = self
            .newest_genres
            .iter()
            .filter(|&&g| candidate.genre_vector[g] != 0.0)
            .count();
        let phase = 2.0 * std::f64::consts::PI * self.now.rem_euclid(DAY_S) as f64 / DAY_S as f64;
        FeatureVector {
            values: [
                affinity,
                shared as f64 / self.genre_count as f64,
                pop.normalized(candidate.item_id),
                self.recency_of_history,
                decay(self.now - candidate.release_day * DAY_S, self.halflife_s),
                phase.sin(),
                phase.cos(),
                1.0,
            ],
        }
    }
}

/// Features for one candidate given the user's (merged or batch) history.
pub fn build_features(
    history: &MergedHistory,
    candidate: &Item,
    catalog: &Catalog,
    pop: &PopularityTable,
    now: Timestamp,
    halflife_s: i64,
) -> FeatureVector {
    UserContext::new(history, catalog, now, halflife_s).features(candidate, pop)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 200,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankerModel {
    pub weights: Vec<f64>,
    pub trained_at: Timestamp,
    pub hyperparameters: TrainConfig,
}

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl RankerModel {
    pub fn from_weights(weights: Vec<f64>, trained_at: Timestamp) -> Self {
        Self {
            weights,
            trained_at,
            hyperparameters: TrainConfig::default(),
        }
    }

    /// Affinity-only scorer used before any model has been trained.
    pub fn heuristic() -> Self {
        let mut weights = vec![0.0; FEATURE_DIM];
        weights[AFFINITY] = 1.0;
        Self::from_weights(weights, 0)
    }

    pub fn logit(&self, fv: &FeatureVector) -> Result<f64> {
        if self.weights.len() != FEATURE_DIM {
            return Err(RankingError::DimensionMismatch {
                expected: FEATURE_DIM,
                found: self.weights.len(),
            });
        }
        Ok(self.weights.iter().zip(&fv.values).map(|(w, x)| w * x).sum())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, w) in SLOT_NAMES.iter().zip(&self.weights) {
            let _ = writeln!(out, "{name}={w:.9}");
        }
        let _ = writeln!(out, "trained_at={}", self.trained_at);
        let hp = &self.hyperparameters;
        let _ = writeln!(out, "learning_rate={}", hp.learning_rate);
        let _ = writeln!(out, "epochs={}", hp.epochs);
        let _ = writeln!(out, "l2={}", hp.l2);
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut weights = vec![f64::NAN; FEATURE_DIM];
        let mut trained_at = None;
        let mut hp = TrainConfig::default();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |reason: String| RankingError::Malformed {
                path: path.to_path_buf(),
                line: idx + 1,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| malformed("expected key=value".into()))?;
            let num = |v: &str| v.parse::<f64>().map_err(|e| malformed(format!("{key}: {e}")));
            match key {
                "trained_at" => trained_at = Some(value.parse().map_err(|e| malformed(format!("trained_at: {e}")))?),
                "learning_rate" => hp.learning_rate = num(value)?,
                "epochs" => hp.epochs = value.parse().map_err(|e| malformed(format!("epochs: {e}")))?,
                "l2" => hp.l2 = num(value)?,
                slot => {
                    let i = SLOT_NAMES
                        .iter()
                        .position(|s| *s == slot)
                        .ok_or_else(|| malformed(format!("unknown key `{slot}`")))?;
                    weights[i] = num(value)?;
                }
            }
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(RankingError::NonFinite(SLOT_NAMES[i].to_string()));
        }
        Ok(Self {
            weights,
            trained_at: trained_at.ok_or_else(|| RankingError::Malformed {
                path: path.to_path_buf(),
                line: 0,
                reason: "missing trained_at".into(),
            })?,
            hyperparameters: hp,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| RankingError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|source| RankingError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Click probability under the model.
pub fn score(model: &RankerModel, fv: &FeatureVector) -> Result<f64> {
    model.logit(fv).map(logistic)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedEntry {
    pub item_id: ItemId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedList {
    /// Score descending, ties by item id ascending.
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.entries.iter().map(|e| e.item_id)
    }
}

/// Scores every candidate and keeps the best `limit`.
pub fn rank(
    model: &RankerModel,
    context: &UserContext,
    candidates: &CandidateSet,
    catalog: &Catalog,
    pop: &PopularityTable,
    limit: usize,
) -> Result<RankedList> {
    let mut entries = candidates
        .candidates
        .iter()
        .map(|c| {
            let item = catalog
                .get(c.item_id)
                .ok_or(RankingError::UnknownCandidate(c.item_id))?;
            Ok(RankedEntry {
                item_id: c.item_id,
                score: score(model, &context.features(item, pop))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.item_id.cmp(&b.item_id)));
    entries.truncate(limit);
    Ok(RankedList { entries })
}

/// One logged (features, click) pair from batch-feature traffic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingImpression {
    pub user_id: UserId,
    pub item_id: ItemId,
    pub served_at: Timestamp,
    pub clicked: bool,
    pub features: FeatureVector,
}

impl TrainingImpression {
    /// Features are rounded to the nine decimals the file keeps.
    pub fn new(user_id: UserId, item_id: ItemId, served_at: Timestamp, clicked: bool, features: FeatureVector) -> Self {
        Self {
            user_id,
            item_id,
            served_at,
            clicked,
            features: FeatureVector {
                values: features.values.map(round9),
            },
        }
    }

    pub fn to_line(&self) -> String {
        let mut out = format!(
            "{},{},{},{}",
            self.user_id, self.item_id, self.served_at, self.clicked as u8
        );
        for v in self.features.values {
            let _ = write!(out, ",{v:.9}");
        }
        out
    }

    pub fn parse_line(line: &str) -> std::result::Result<Self, String> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 + FEATURE_DIM {
            return Err(format!("expected {} fields, found {}", 4 + FEATURE_DIM, f.len()));
        }
        let mut values = [0.0; FEATURE_DIM];
        for (slot, v) in values.iter_mut().zip(&f[4..]) {
            *slot = v.parse().map_err(|e| format!("feature `{v}`: {e}"))?;
        }
        Ok(Self {
            user_id: f[0].parse().map_err(|e| format!("user_id: {e}"))?,
            item_id: f[1].parse().map_err(|e| format!("item_id: {e}"))?,
            served_at: f[2].parse().map_err(|e| format!("served_at: {e}"))?,
            clicked: match f[3] {
                "0" => false,
                "1" => true,
                other => return Err(format!("clicked must be 0 or 1, found `{other}`")),
            },
            features: FeatureVector { values },
        })
    }
}

pub fn read_training_impressions(path: &Path) -> Result<Vec<TrainingImpression>> {
    let text = std::fs::read_to_string(path).map_err(|source| RankingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(idx, l)| {
            TrainingImpression::parse_line(l).map_err(|reason| RankingError::Malformed {
                path: path.to_path_buf(),
                line: idx + 1,
                reason,
            })
        })
        .collect()
}

pub fn write_training_impressions(path: &Path, rows: &[TrainingImpression]) -> Result<()> {
    let mut out = String::with_capacity(rows.len() * 120);
    for r in rows {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| RankingError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Mean log-loss plus `l2/2 * |w|^2` over the non-bias weights, and its gradient.
pub fn loss_and_gradient(
    weights: &[f64; FEATURE_DIM],
    data: &[TrainingImpression],
    l2: f64,
) -> (f64, [f64; FEATURE_DIM]) {
    let n = data.len() as f64;
    let mut loss = 0.0;
    let mut grad = [0.0; FEATURE_DIM];
    for row in data {
        let x = &row.features.values;
        let z: f64 = weights.iter().zip(x).map(|(w, v)| w * v).sum();
        let y = if row.clicked { 1.0 } else { 0.0 };
        // log(1 + e^z) - y z, computed stably
        loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z;
        let residual = logistic(z) - y;
        for (g, v) in grad.iter_mut().zip(x) {
            *g += residual * v;
        }
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    for j in 0..FEATURE_DIM {
        if j != BIAS {
            loss += 0.5 * l2 * weights[j] * weights[j];
            grad[j] += l2 * weights[j];
        }
    }
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub final_log_loss: f64,
    pub impressions: usize,
}

/// Full-batch gradient descent from zero weights. Weights are rounded to the
/// nine decimals the model file keeps.
pub fn train_ranker(
    data: &[TrainingImpression],
    config: &TrainConfig,
    trained_at: Timestamp,
) -> Result<(RankerModel, TrainReport)> {
    if data.len() < MIN_TRAINING_IMPRESSIONS {
        return Err(RankingError::InsufficientData(data.len()));
    }
    let mut w = [0.0; FEATURE_DIM];
    for _ in 0..config.epochs {
        let (_, grad) = loss_and_gradient(&w, data, config.l2);
        for (wj, gj) in w.iter_mut().zip(grad) {
            *wj -= config.learning_rate * gj;
        }
    }
    let weights: Vec<f64> = w.iter().map(|x| round9(*x)).collect();
    let mut rounded = [0.0; FEATURE_DIM];
    rounded.copy_from_slice(&weights);
    let (final_log_loss, _) = loss_and_gradient(&rounded, data, 0.0);
    Ok((
        RankerModel {
            weights,
            trained_at,
            hyperparameters: *config,
        },
        TrainReport {
            final_log_loss,
            impressions: data.len(),
        },
    ))
}
