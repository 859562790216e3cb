//! Closed-loop A/B simulation: synthetic users with intra-day drift consume
//! recommendations through the real serving path, and their watches feed
//! both the event log and the real-time store.

use std::path::PathBuf;

use thiserror::Error;

use crate::batch::BatchError;
use crate::config::ConfigError;
use crate::event_log::EventLogError;
use crate::manifest::ManifestError;
use crate::ranking::RankingError;
use crate::serving::ServeError;

pub mod experiment;
pub mod stats;
pub mod users;

pub use experiment::{
    run_experiment, substream, DayOutcome, ExperimentOutcome, Phase, SessionRecord, Stream, World, CONFIG_FILE,
    EVENTS_FILE, IMPRESSIONS_FILE, REPORT_FILE, REPORT_KV_FILE, TRAINING_FILE,
};
pub use stats::{two_proportion_ztest, LiftReport};
pub use users::{choice_model, click_probability, drift_user, relevance, GenreIndex, UserProfile};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Log(#[from] EventLogError),
    #[error(transparent)]
    Batch(#[from] BatchError),
    #[error(transparent)]
    Serve(#[from] ServeError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("zero impressions in the {0} arm")]
    EmptyArm(crate::injection::Arm),
}
