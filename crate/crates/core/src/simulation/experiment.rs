//! The experiment timeline.
//!
//! ```text
//! day 0 .. R            catalog releases, no users yet
//! R .. R+W              warm-up: self-directed watches build first histories
//! R+W .. R+W+B          bootstrap: control pipeline, heuristic scorer, logged for training
//!                       ranker trained once and frozen
//! R+W+B .. R+W+B+days   A/B: each user served by their assigned arm
//! ```
//!
//! A batch run closes every day with the next day's start as cutoff.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::stats::LiftReport;
use super::users::{choice_model, drift_user, GenreIndex, UserProfile};
use super::SimError;
use crate::batch::run_batch_events;
use crate::config::{BatchConfig, ExperimentConfig};
use crate::event_log::{append_events, generate_catalog, Catalog, WatchEvent, RELEASE_WINDOW_DAYS};
use crate::injection::{Arm, Assignment};
use crate::manifest::sha256_file;
use crate::ranking::{
    train_ranker, write_training_impressions, RankerModel, TrainConfig, TrainReport, TrainingImpression,
};
use crate::realtime::RealtimeStore;
use crate::serving::{RecRequest, Recommender, CATALOG_FILE, RANKER_FILE};
use crate::types::{round6, ItemId, Timestamp, UserId, DAY_S};

pub const EVENTS_FILE: &str = "events.log";
pub const IMPRESSIONS_FILE: &str = "impressions.log";
pub const TRAINING_FILE: &str = "training.txt";
pub const CONFIG_FILE: &str = "config.txt";
pub const REPORT_FILE: &str = "report.txt";
pub const REPORT_KV_FILE: &str = "report.kv";

/// Longest simulated watch, for turning completion into seconds.
const RUNTIME_S: f64 = 5400.0;

/// Named substreams of the run's generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Profiles = 1,
    Drift = 2,
    Sessions = 3,
    Choice = 4,
    Organic = 5,
    Completion = 6,
    Warmup = 7,
    Training = 8,
}

pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Everyone on the control path; every shown item becomes a training row.
    Bootstrap,
    Experiment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecord {
    pub user_id: UserId,
    pub timestamp: Timestamp,
    pub arm: Arm,
    pub shown: Vec<ItemId>,
    /// Zero-based rank and item.
    pub click: Option<(usize, ItemId)>,
    /// Self-directed watch after a session without a click.
    pub organic: Option<ItemId>,
}

#[derive(Debug, Clone, Default)]
pub struct DayOutcome {
    pub sessions: Vec<SessionRecord>,
    pub events: Vec<WatchEvent>,
    pub training: Vec<TrainingImpression>,
}

struct Rngs {
    drift: ChaCha8Rng,
    sessions: ChaCha8Rng,
    choice: ChaCha8Rng,
    organic: ChaCha8Rng,
    completion: ChaCha8Rng,
}

impl Rngs {
    fn new(seed: u64) -> Self {
        Self {
            drift: substream(seed, Stream::Drift),
            sessions: substream(seed, Stream::Sessions),
            choice: substream(seed, Stream::Choice),
            organic: substream(seed, Stream::Organic),
            completion: substream(seed, Stream::Completion),
        }
    }
}

/// Everything the simulation mutates from day to day.
pub struct World {
    pub config: ExperimentConfig,
    pub profiles: Vec<UserProfile>,
    pub recommender: Recommender,
    pub genres: GenreIndex,
    /// Every event emitted so far, in log order.
    pub events: Vec<WatchEvent>,
    pub log_path: Option<PathBuf>,
    batch_config: BatchConfig,
    rngs: Rngs,
}

impl World {
    /// Wires a world from explicit parts. `now` is the cutoff of `batch`.
    pub fn from_parts(
        config: ExperimentConfig,
        catalog: Catalog,
        profiles: Vec<UserProfile>,
        history: Vec<WatchEvent>,
        model: RankerModel,
        now: Timestamp,
    ) -> Result<Self, SimError> {
        config.validate()?;
        let batch_config = BatchConfig::default();
        let batch = run_batch_events(&history, &catalog, now, &batch_config)?;
        let serving = config.serving();
        let store = Arc::new(RealtimeStore::new(serving.store.clone()));
        let assignment = Assignment::hash_split(profiles.iter().map(|p| p.user_id), &config.salt, config.split_ratio);
        let genres = GenreIndex::new(&catalog);
        let recommender = Recommender::new(
            Arc::new(catalog),
            Arc::new(batch),
            Arc::new(model),
            store,
            Arc::new(assignment),
            serving,
        )
        .with_injection(config.injection_enabled);
        for e in &history {
            recommender.ingest(e)?;
        }
        recommender.store().evict_expired(now);
        Ok(Self {
            rngs: Rngs::new(config.seed),
            config,
            profiles,
            recommender,
            genres,
            events: history,
            log_path: None,
            batch_config,
        })
    }

    /// Catalog, profiles and warm-up history from the config's seed.
    pub fn generate(config: ExperimentConfig) -> Result<Self, SimError> {
        config.validate()?;
        let catalog = generate_catalog(config.item_count, config.genre_count, config.seed)?;
        let mut rng = substream(config.seed, Stream::Profiles);
        let profiles: Vec<UserProfile> = (0..config.user_count as u32)
            .map(|u| {
                UserProfile::random(
                    UserId(u),
                    config.genre_count,
                    config.base_dominance,
                    config.drift_probability,
                    &mut rng,
                )
            })
            .collect();
        let history = warmup_history(&config, &catalog, &profiles);
        let now = (RELEASE_WINDOW_DAYS + config.warmup_days as i64) * DAY_S;
        Self::from_parts(config, catalog, profiles, history, RankerModel::heuristic(), now)
    }

    pub fn catalog(&self) -> &Catalog {
        self.recommender.catalog()
    }

    /// Start of absolute day `day`.
    pub fn day_start(day: i64) -> Timestamp {
        day * DAY_S
    }

    /// One simulated day starting at `day_start`: drift, sessions in time
    /// order, watches ingested as they happen, then the day's batch run.
    pub fn simulate_day(&mut self, day_start: Timestamp, phase: Phase) -> Result<DayOutcome, SimError> {
        let cfg = &self.config;
        for p in self.profiles.iter_mut() {
            *p = drift_user(p, &mut self.rngs.drift);
        }
        let mut sessions: Vec<(i64, UserId)> = Vec::with_capacity(self.profiles.len() * cfg.sessions_per_user_per_day);
        for p in &self.profiles {
            for _ in 0..cfg.sessions_per_user_per_day {
                sessions.push((self.rngs.sessions.gen_range(0..DAY_S), p.user_id));
            }
        }
        sessions.sort_unstable();

        let mut out = DayOutcome::default();
        for (second, user) in sessions {
            let now = day_start + second;
            let record = self.session(user, now, second, phase, &mut out.training)?;
            if let Some(item) = record.click.map(|(_, i)| i).or(record.organic) {
                let event = self.watch(user, item, now);
                self.recommender.ingest(&event)?;
                out.events.push(event);
            }
            out.sessions.push(record);
        }
        self.close_day(day_start + DAY_S, &out.events)?;
        Ok(out)
    }

    /// Runs `days` bootstrap days from absolute day `first_day` and returns
    /// the training rows, negatives subsampled to balance the positives.
    pub fn bootstrap(&mut self, first_day: i64, days: usize) -> Result<Vec<TrainingImpression>, SimError> {
        let mut rows = Vec::new();
        for d in 0..days as i64 {
            rows.extend(
                self.simulate_day(Self::day_start(first_day + d), Phase::Bootstrap)?
                    .training,
            );
        }
        let mut rng = substream(self.config.seed, Stream::Training);
        Ok(downsample_negatives(rows, &mut rng))
    }

    fn session(
        &mut self,
        user: UserId,
        now: Timestamp,
        second: i64,
        phase: Phase,
        training: &mut Vec<TrainingImpression>,
    ) -> Result<SessionRecord, SimError> {
        let count = self.config.list_length;
        let (arm, list, context) = match phase {
            Phase::Bootstrap => {
                let served = self.recommender.serve_arm(user, Arm::Control, now, count)?;
                (Arm::Control, served.list, Some(served.context))
            }
            Phase::Experiment => {
                let imp = self.recommender.recommend(&RecRequest {
                    user_id: user,
                    now,
                    requested_count: count,
                })?;
                (imp.arm, imp.list, None)
            }
        };
        let profile = &self.profiles[user.0 as usize];
        let preference = profile.preference_at(second);
        let catalog = self.recommender.catalog();
        let click = choice_model(
            &list,
            preference,
            catalog,
            self.config.position_discount,
            &mut self.rngs.choice,
        );
        let organic = if click.is_none() && self.rngs.organic.gen_bool(self.config.organic_watch_probability) {
            Some(self.genres.sample_dominant(preference, &mut self.rngs.organic))
        } else {
            None
        };
        if let Some(ctx) = context {
            let pop = &self.recommender.batch().popularity;
            for entry in &list.entries {
                let item = catalog.get(entry.item_id).expect("ranked items come from the catalog");
                let clicked = click.is_some_and(|(_, i)| i == entry.item_id);
                training.push(TrainingImpression::new(
                    user,
                    entry.item_id,
                    now,
                    clicked,
                    ctx.features(item, pop),
                ));
            }
        }
        Ok(SessionRecord {
            user_id: user,
            timestamp: now,
            arm,
            shown: list.items().collect(),
            click,
            organic,
        })
    }

    fn watch(&mut self, user: UserId, item: ItemId, now: Timestamp) -> WatchEvent {
        let completion = round6(self.rngs.completion.gen_range(0.2..1.0));
        WatchEvent {
            user_id: user,
            item_id: item,
            timestamp: now,
            watch_duration_s: (completion * RUNTIME_S).round() as u64,
            completion_fraction: completion,
        }
    }

    fn close_day(&mut self, cutoff: Timestamp, day_events: &[WatchEvent]) -> Result<(), SimError> {
        if let Some(path) = &self.log_path {
            append_events(path, day_events)?;
        }
        self.events.extend_from_slice(day_events);
        let batch = run_batch_events(&self.events, self.recommender.catalog(), cutoff, &self.batch_config)?;
        self.recommender.set_batch(Arc::new(batch));
        self.recommender.store().evict_expired(cutoff);
        Ok(())
    }
}

/// Keeps every positive and each negative with probability
/// `positives / negatives`, so both classes are equally frequent in
/// expectation. Order is preserved.
pub fn downsample_negatives<R: Rng>(rows: Vec<TrainingImpression>, rng: &mut R) -> Vec<TrainingImpression> {
    let positives = rows.iter().filter(|r| r.clicked).count();
    let negatives = rows.len() - positives;
    if negatives <= positives {
        return rows;
    }
    let keep = positives as f64 / negatives as f64;
    rows.into_iter().filter(|r| r.clicked || rng.gen_bool(keep)).collect()
}

/// Warm-up watches drawn from each user's base preference at uniform
/// times over the warm-up days, in log order.
fn warmup_history(config: &ExperimentConfig, catalog: &Catalog, profiles: &[UserProfile]) -> Vec<WatchEvent> {
    let genres = GenreIndex::new(catalog);
    let mut rng = substream(config.seed, Stream::Warmup);
    let start = RELEASE_WINDOW_DAYS * DAY_S;
    let span = config.warmup_days as i64 * DAY_S;
    let mut events = Vec::with_capacity(profiles.len() * config.warmup_events_per_user);
    for p in profiles {
        for _ in 0..config.warmup_events_per_user {
            let ts = start + rng.gen_range(0..span);
            let item = genres.sample(&p.base_preference, &mut rng);
            let completion = round6(rng.gen_range(0.2..1.0));
            events.push(WatchEvent {
                user_id: p.user_id,
                item_id: item,
                timestamp: ts,
                watch_duration_s: (completion * RUNTIME_S).round() as u64,
                completion_fraction: completion,
            });
        }
    }
    events.sort_by_key(|e| (e.timestamp, e.user_id, e.item_id));
    events
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: LiftReport,
    pub train_report: TrainReport,
    pub model_checksum_before: String,
    pub model_checksum_after: String,
    pub clicks: u64,
    pub organic_watches: u64,
    pub events_logged: u64,
    pub store_ingested: u64,
    pub out_dir: PathBuf,
}

impl ExperimentOutcome {
    pub fn text(&self) -> String {
        let mut out = self.report.summary();
        out.push_str(&format!(
            "  ranker trained on {} impressions, log-loss {:.6}\n",
            self.train_report.impressions, self.train_report.final_log_loss
        ));
        out.push_str(&format!(
            "  events logged {} ({} clicks, {} self-directed), store ingests {}\n",
            self.events_logged, self.clicks, self.organic_watches, self.store_ingested
        ));
        out.push_str(&format!(
            "  model sha256 before {} after {}\n",
            self.model_checksum_before, self.model_checksum_after
        ));
        out
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Runs warm-up, bootstrap, training and the A/B phase, writing every
/// artifact under `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutcome, SimError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let config_path = out_dir.join(CONFIG_FILE);
    std::fs::write(&config_path, config.to_kv_string()).map_err(io_err(&config_path))?;

    let mut world = World::generate(config.clone())?;
    world.catalog().write(&out_dir.join(CATALOG_FILE))?;
    let log_path = out_dir.join(EVENTS_FILE);
    File::create(&log_path).map_err(io_err(&log_path))?;
    append_events(&log_path, &world.events)?;
    world.log_path = Some(log_path);

    let mut day = RELEASE_WINDOW_DAYS + config.warmup_days as i64;
    let training = world.bootstrap(day, config.bootstrap_days)?;
    day += config.bootstrap_days as i64;
    let mut clicks = 0u64;
    let mut organic = 0u64;
    let training_path = out_dir.join(TRAINING_FILE);
    write_training_impressions(&training_path, &training)?;
    let (model, train_report) = train_ranker(&training, &TrainConfig::default(), World::day_start(day))?;
    drop(training);
    let model_path = out_dir.join(RANKER_FILE);
    model.write(&model_path)?;
    let model_checksum_before = sha256_file(&model_path)?;
    world.recommender.set_model(Arc::new(RankerModel::load(&model_path)?));

    let impressions_path = out_dir.join(IMPRESSIONS_FILE);
    File::create(&impressions_path).map_err(io_err(&impressions_path))?;
    world.recommender.set_impression_log(&impressions_path)?;

    let (mut imp_c, mut clk_c, mut imp_t, mut clk_t) = (0u64, 0u64, 0u64, 0u64);
    for _ in 0..config.days {
        let outcome = world.simulate_day(World::day_start(day), Phase::Experiment)?;
        for s in &outcome.sessions {
            let clicked = s.click.is_some() as u64;
            match s.arm {
                Arm::Control => {
                    imp_c += 1;
                    clk_c += clicked;
                }
                Arm::Treatment => {
                    imp_t += 1;
                    clk_t += clicked;
                }
            }
            clicks += clicked;
            organic += s.organic.is_some() as u64;
        }
        day += 1;
    }
    world.recommender.flush_impressions()?;
    world.recommender.batch().write(out_dir)?;

    if imp_c == 0 {
        return Err(SimError::EmptyArm(Arm::Control));
    }
    if imp_t == 0 {
        return Err(SimError::EmptyArm(Arm::Treatment));
    }
    let report = LiftReport::from_counts(imp_c, clk_c, imp_t, clk_t, config.alpha).expect("both arms non-empty");
    let outcome = ExperimentOutcome {
        report,
        train_report,
        model_checksum_before,
        model_checksum_after: sha256_file(&model_path)?,
        clicks,
        organic_watches: organic,
        events_logged: world.events.len() as u64,
        store_ingested: world.recommender.store().ingested(),
        out_dir: out_dir.to_path_buf(),
    };
    let kv_path = out_dir.join(REPORT_KV_FILE);
    std::fs::write(&kv_path, outcome.report.to_kv()).map_err(io_err(&kv_path))?;
    let txt_path = out_dir.join(REPORT_FILE);
    let mut w = BufWriter::new(File::create(&txt_path).map_err(io_err(&txt_path))?);
    w.write_all(outcome.text().as_bytes()).map_err(io_err(&txt_path))?;
    w.flush().map_err(io_err(&txt_path))?;
    Ok(outcome)
}
