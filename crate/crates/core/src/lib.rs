//! Batch-updated two-stage recommender with inference-time injection of
//! real-time watch history.
//!
//! The offline side ([`batch`]) turns an append-only event log into daily
//! history snapshots, an item-item similarity model and a popularity table.
//! The online side ([`realtime`]) keeps a short, TTL-bounded window of each
//! user's newest watches. At request time [`injection`] merges the two so
//! that [`retrieval`] and [`ranking`] consume fresh history through the same
//! interface they use for batch history, with the ranker left untouched.
//! [`simulation`] drives both arms of an A/B experiment with synthetic users
//! whose preferences drift within a day.

pub mod batch;
pub mod config;
pub mod event_log;
pub mod injection;
pub mod manifest;
pub mod ranking;
pub mod realtime;
pub mod retrieval;
pub mod serving;
pub mod simulation;
pub mod types;

pub use types::{decay, HistoryEntry, ItemId, Timestamp, UserId, DAY_S};
