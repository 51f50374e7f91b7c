//! A small Learning Record Store: idempotent statement storage across the
//! Noise / Transactional / Authoritative tiers with per-tier journals, plus
//! the analytics, adaptive engine and tutor routes served next to it.

pub mod auth;
pub mod engine;
pub mod http;
pub mod journal;
pub mod llm;
pub mod service;
pub mod store;
pub mod tiers;
pub mod tutor;

pub use http::{router, serve};
pub use service::{AppState, ServiceConfig, StartupError};
pub use store::{Cursor, Page, QueryError, QueryFilter, StatementStore, StoreOutcome};
pub use tiers::{route_tiers, ForwardOutcome, TieredLrs};
