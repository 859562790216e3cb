//! Tunable parameters for every stage, plus the flat `key=value` experiment
//! config file.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::types::DAY_S;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: `{value}`")]
    BadValue { key: String, value: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchConfig {
    /// History entries kept per user snapshot.
    pub k_batch: usize,
    /// Neighbors kept per item in the similarity model.
    pub m_neighbors: usize,
    /// Trailing window for popularity counts.
    pub pop_days: i64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            k_batch: 50,
            m_neighbors: 10,
            pop_days: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreConfig {
    pub r_cap: usize,
    pub ttl_s: i64,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            r_cap: 20,
            ttl_s: DAY_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalConfig {
    pub h_seed: usize,
    pub m_primary: usize,
    pub m_pop: usize,
    pub c_max: usize,
    pub halflife_s: i64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            h_seed: 10,
            m_primary: 100,
            m_pop: 20,
            c_max: 100,
            halflife_s: 7 * DAY_S,
        }
    }
}

/// Everything the online request path needs besides the artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct ServingConfig {
    pub k_merge: usize,
    pub list_length: usize,
    pub retrieval: RetrievalConfig,
    pub store: StoreConfig,
}

impl Default for ServingConfig {
    fn default() -> Self {
        Self {
            k_merge: BatchConfig::default().k_batch,
            list_length: 10,
            retrieval: RetrievalConfig::default(),
            store: StoreConfig::default(),
        }
    }
}

/// One A/B experiment run. Field names double as config file keys.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub user_count: usize,
    pub item_count: usize,
    pub genre_count: usize,
    pub days: usize,
    pub bootstrap_days: usize,
    pub warmup_days: usize,
    pub warmup_events_per_user: usize,
    pub sessions_per_user_per_day: usize,
    pub drift_probability: f64,
    /// Fraction of users assigned to treatment.
    pub split_ratio: f64,
    pub salt: String,
    pub seed: u64,
    pub list_length: usize,
    pub batch_cadence_s: i64,
    pub position_discount: f64,
    /// Probability mass of the dominant genre in a user's base preference.
    pub base_dominance: f64,
    /// Chance that a session without a recommendation click ends in a
    /// self-directed watch (search or browse) drawn from the active preference.
    pub organic_watch_probability: f64,
    /// When false the treatment arm is served exactly like control (A/A).
    pub injection_enabled: bool,
    pub alpha: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            user_count: 10_000,
            item_count: 2_000,
            genre_count: 12,
            days: 14,
            bootstrap_days: 2,
            warmup_days: 7,
            warmup_events_per_user: 16,
            sessions_per_user_per_day: 2,
            drift_probability: 0.3,
            split_ratio: 0.5,
            salt: "freshrec".to_string(),
            seed: 42,
            list_length: 10,
            batch_cadence_s: DAY_S,
            position_discount: 0.85,
            base_dominance: 0.3,
            organic_watch_probability: 1.0,
            injection_enabled: true,
            alpha: 0.05,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.user_count == 0
            || self.item_count == 0
            || self.days == 0
            || self.sessions_per_user_per_day == 0
            || self.list_length == 0
            || self.batch_cadence_s <= 0
        {
            return invalid("all counts must be positive");
        }
        if self.genre_count < 2 {
            return invalid("genre_count must be at least 2");
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return invalid("split_ratio must lie in (0,1)");
        }
        for (name, p) in [
            ("drift_probability", self.drift_probability),
            ("position_discount", self.position_discount),
            ("base_dominance", self.base_dominance),
            ("organic_watch_probability", self.organic_watch_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::Invalid(format!("{name} must lie in [0,1]")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid("alpha must lie in (0,1)");
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("user_count", self.user_count.to_string()),
            ("item_count", self.item_count.to_string()),
            ("genre_count", self.genre_count.to_string()),
            ("days", self.days.to_string()),
            ("bootstrap_days", self.bootstrap_days.to_string()),
            ("warmup_days", self.warmup_days.to_string()),
            ("warmup_events_per_user", self.warmup_events_per_user.to_string()),
            ("sessions_per_user_per_day", self.sessions_per_user_per_day.to_string()),
            ("drift_probability", self.drift_probability.to_string()),
            ("split_ratio", self.split_ratio.to_string()),
            ("salt", self.salt.clone()),
            ("seed", self.seed.to_string()),
            ("list_length", self.list_length.to_string()),
            ("batch_cadence_s", self.batch_cadence_s.to_string()),
            ("position_discount", self.position_discount.to_string()),
            ("base_dominance", self.base_dominance.to_string()),
            ("organic_watch_probability", self.organic_watch_probability.to_string()),
            ("injection_enabled", self.injection_enabled.to_string()),
            ("alpha", self.alpha.to_string()),
        ]
    }

    pub fn to_kv_string(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Parses a `key=value` file. Missing keys keep their defaults; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let kv = parse_kv(text)?;
        let mut cfg = Self::default();
        for (key, value) in kv {
            let bad = || ConfigError::BadValue {
                key: key.clone(),
                value: value.clone(),
            };
            macro_rules! set {
                ($field:ident) => {
                    cfg.$field = value.parse().map_err(|_| bad())?
                };
            }
            match key.as_str() {
                "user_count" => set!(user_count),
                "item_count" => set!(item_count),
                "genre_count" => set!(genre_count),
                "days" => set!(days),
                "bootstrap_days" => set!(bootstrap_days),
                "warmup_days" => set!(warmup_days),
                "warmup_events_per_user" => set!(warmup_events_per_user),
                "sessions_per_user_per_day" => set!(sessions_per_user_per_day),
                "drift_probability" => set!(drift_probability),
                "split_ratio" => set!(split_ratio),
                "salt" => cfg.salt = value.clone(),
                "seed" => set!(seed),
                "list_length" => set!(list_length),
                "batch_cadence_s" => set!(batch_cadence_s),
                "position_discount" => set!(position_discount),
                "base_dominance" => set!(base_dominance),
                "organic_watch_probability" => set!(organic_watch_probability),
                "injection_enabled" => set!(injection_enabled),
                "alpha" => set!(alpha),
                _ => return Err(ConfigError::UnknownKey(key)),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn serving(&self) -> ServingConfig {
        ServingConfig {
            list_length: self.list_length,
            ..ServingConfig::default()
        }
    }
}

/// Ordered `key=value` pairs; later duplicates overwrite earlier ones.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: idx + 1,
            text: raw.to_string(),
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}
