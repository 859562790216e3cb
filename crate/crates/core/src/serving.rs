//! The request path for both arms, plus a small HTTP front end.
//!
//! control:   snapshot ─┐
//!                      ├─ merge ─ retrieve ─ rank
//! treatment: snapshot ─┤
//!            recent ───┘

use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::Mutex;
use thiserror::Error;

use crate::batch::{BatchArtifacts, BatchError};
use crate::config::ServingConfig;
use crate::event_log::{Catalog, EventLogError, WatchEvent};
use crate::injection::{merge_history, select_arm, Arm, Assignment, InjectionError, MergedHistory};
use crate::ranking::{rank, RankedList, RankerModel, RankingError, UserContext};
use crate::realtime::{RealtimeError, RealtimeStore, RecentWindow};
use crate::retrieval::build_candidates;
use crate::types::{Timestamp, UserId};

pub mod http;

pub const CATALOG_FILE: &str = "catalog.txt";
pub const RANKER_FILE: &str = "ranker.txt";

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Assignment(#[from] InjectionError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error(transparent)]
    Ingest(#[from] RealtimeError),
    #[error("missing or unreadable artifacts: {0}")]
    Artifacts(String),
    #[error("impression log {path}: {source}")]
    ImpressionLog { path: PathBuf, source: std::io::Error },
}

impl From<BatchError> for ServeError {
    fn from(e: BatchError) -> Self {
        ServeError::Artifacts(e.to_string())
    }
}

impl From<EventLogError> for ServeError {
    fn from(e: EventLogError) -> Self {
        ServeError::Artifacts(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecRequest {
    pub user_id: UserId,
    pub now: Timestamp,
    pub requested_count: usize,
}

/// What was shown to whom, logged at response time.
#[derive(Debug, Clone, PartialEq)]
pub struct Impression {
    pub request: RecRequest,
    pub arm: Arm,
    pub list: RankedList,
    pub served_at: Timestamp,
}

impl Impression {
    /// `user_id,served_at,requested_count,arm,item:score;...`
    pub fn to_line(&self) -> String {
        let mut out = format!(
            "{},{},{},{},",
            self.request.user_id, self.served_at, self.request.requested_count, self.arm
        );
        for (i, e) in self.list.entries.iter().enumerate() {
            if i > 0 {
                out.push(';');
            }
            let _ = write!(out, "{}:{:.6}", e.item_id, e.score);
        }
        out
    }
}

/// Line-delimited `rank,item_id,score` rows followed by `arm=<arm>`.
pub fn format_response(list: &RankedList, arm: Arm) -> String {
    let mut out = String::with_capacity(list.len() * 24 + 16);
    for (rank, e) in list.entries.iter().enumerate() {
        let _ = writeln!(out, "{},{},{:.6}", rank + 1, e.item_id, e.score);
    }
    let _ = writeln!(out, "arm={arm}");
    out
}

/// Loads the catalog, batch artifacts and ranker written by the offline jobs.
pub fn load_artifacts(dir: &Path) -> Result<(Catalog, BatchArtifacts, RankerModel), ServeError> {
    let catalog = Catalog::load(&dir.join(CATALOG_FILE))?;
    let batch = BatchArtifacts::load(dir)?;
    let model = RankerModel::load(&dir.join(RANKER_FILE)).map_err(|e| ServeError::Artifacts(e.to_string()))?;
    if batch.similarity.item_count() != catalog.len() || batch.popularity.counts().len() != catalog.len() {
        return Err(ServeError::Artifacts(format!(
            "batch artifacts cover {} items, catalog has {}",
            batch.similarity.item_count(),
            catalog.len()
        )));
    }
    Ok((catalog, batch, model))
}

/// Everything produced for one served request.
#[derive(Debug, Clone)]
pub struct Served {
    pub arm: Arm,
    pub history: MergedHistory,
    pub context: UserContext,
    pub list: RankedList,
}

pub struct Recommender {
    catalog: Arc<Catalog>,
    batch: Arc<BatchArtifacts>,
    model: Arc<RankerModel>,
    store: Arc<RealtimeStore>,
    assignment: Arc<Assignment>,
    config: ServingConfig,
    injection_enabled: bool,
    impression_log: Option<(PathBuf, Mutex<BufWriter<File>>)>,
}

impl Recommender {
    pub fn new(
        catalog: Arc<Catalog>,
        batch: Arc<BatchArtifacts>,
        model: Arc<RankerModel>,
        store: Arc<RealtimeStore>,
        assignment: Arc<Assignment>,
        config: ServingConfig,
    ) -> Self {
        Self {
            catalog,
            batch,
            model,
            store,
            assignment,
            config,
            injection_enabled: true,
            impression_log: None,
        }
    }

    /// With injection disabled the treatment arm is served like control.
    pub fn with_injection(mut self, enabled: bool) -> Self {
        self.injection_enabled = enabled;
        self
    }

    /// Appends one line per served impression to `path`.
    pub fn with_impression_log(mut self, path: &Path) -> Result<Self, ServeError> {
        self.set_impression_log(path)?;
        Ok(self)
    }

    pub fn set_impression_log(&mut self, path: &Path) -> Result<(), ServeError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| ServeError::ImpressionLog {
                path: path.to_path_buf(),
                source,
            })?;
        self.impression_log = Some((path.to_path_buf(), Mutex::new(BufWriter::new(file))));
        Ok(())
    }

    pub fn flush_impressions(&self) -> Result<(), ServeError> {
        if let Some((path, w)) = &self.impression_log {
            w.lock().flush().map_err(|source| ServeError::ImpressionLog {
                path: path.clone(),
                source,
            })?;
        }
        Ok(())
    }

    pub fn set_batch(&mut self, batch: Arc<BatchArtifacts>) {
        self.batch = batch;
    }

    pub fn set_model(&mut self, model: Arc<RankerModel>) {
        self.model = model;
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn batch(&self) -> &BatchArtifacts {
        &self.batch
    }

    pub fn model(&self) -> &RankerModel {
        &self.model
    }

    pub fn store(&self) -> &RealtimeStore {
        &self.store
    }

    pub fn config(&self) -> &ServingConfig {
        &self.config
    }

    pub fn arm_of(&self, user: UserId) -> Result<Arm, ServeError> {
        Ok(select_arm(user, &self.assignment)?)
    }

    /// Control merges the snapshot with an empty window; treatment merges it
    /// with the live window.
    pub fn history_for(&self, user: UserId, arm: Arm, now: Timestamp) -> MergedHistory {
        let ttl_s = self.config.store.ttl_s;
        let recent = match arm {
            Arm::Treatment if self.injection_enabled => self.store.get_recent(user, now),
            _ => RecentWindow::empty(user, ttl_s),
        };
        merge_history(
            self.batch.snapshots.snapshot_for(user),
            &recent,
            now,
            self.config.k_merge,
        )
    }

    /// Runs the full pipeline for an explicit arm without logging.
    pub fn serve_arm(&self, user: UserId, arm: Arm, now: Timestamp, count: usize) -> Result<Served, ServeError> {
        let history = self.history_for(user, arm, now);
        let retrieval = &self.config.retrieval;
        let context = UserContext::new(&history, &self.catalog, now, retrieval.halflife_s);
        let candidates = build_candidates(&history, &self.batch.similarity, &self.batch.popularity, now, retrieval);
        let list = rank(
            &self.model,
            &context,
            &candidates,
            &self.catalog,
            &self.batch.popularity,
            count,
        )?;
        Ok(Served {
            arm,
            history,
            context,
            list,
        })
    }

    pub fn validate(&self, request: &RecRequest) -> Result<(), ServeError> {
        if request.requested_count == 0 || request.requested_count > self.config.list_length {
            return Err(ServeError::InvalidRequest(format!(
                "count must be in 1..={}, got {}",
                self.config.list_length, request.requested_count
            )));
        }
        if request.now < 0 {
            return Err(ServeError::InvalidRequest(format!("negative clock {}", request.now)));
        }
        Ok(())
    }

    /// Resolves the arm, serves the request and logs the impression.
    pub fn recommend(&self, request: &RecRequest) -> Result<Impression, ServeError> {
        self.validate(request)?;
        let arm = self.arm_of(request.user_id)?;
        let served = self.serve_arm(request.user_id, arm, request.now, request.requested_count)?;
        let impression = Impression {
            request: *request,
            arm,
            list: served.list,
            served_at: request.now,
        };
        self.log(&impression)?;
        Ok(impression)
    }

    pub fn log(&self, impression: &Impression) -> Result<(), ServeError> {
        if let Some((path, w)) = &self.impression_log {
            writeln!(w.lock(), "{}", impression.to_line()).map_err(|source| ServeError::ImpressionLog {
                path: path.clone(),
                source,
            })?;
        }
        Ok(())
    }

    pub fn ingest(&self, event: &WatchEvent) -> Result<u64, ServeError> {
        if !self.catalog.contains(event.item_id) {
            return Err(ServeError::InvalidRequest(format!("unknown item {}", event.item_id)));
        }
        Ok(self.store.ingest(event)?.sequence)
    }
}
