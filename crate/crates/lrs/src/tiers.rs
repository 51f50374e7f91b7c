//! The Noise / Transactional / Authoritative store chain.
//!
//! A statement is written to the store of its verb's minimum tier and
//! mirrored to Noise, so Noise holds everything. Unknown verbs go to Noise
//! only. Idempotency is decided against Noise.

use std::path::{Path, PathBuf};

use parking_lot::{Mutex, RwLock, RwLockReadGuard};
use sha2::{Digest, Sha256};
use vita_core::xapi::{serialize_statement, GranularityTier, SerializeError, Statement, VerbRegistry};

use crate::journal::{Journal, JournalError};
use crate::store::{Page, QueryError, QueryFilter, StatementStore, StoreOutcome};

#[derive(Debug, thiserror::Error)]
pub enum ForwardError {
    #[error(transparent)]
    Invalid(#[from] SerializeError),
    #[error("statement {index}: {source}")]
    InvalidInBatch { index: usize, source: SerializeError },
    #[error(transparent)]
    Journal(#[from] JournalError),
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct ForwardOutcome {
    pub id: uuid::Uuid,
    pub outcome: StoreOutcome,
    /// Tiers actually written; empty unless `outcome` is `Stored`.
    pub tiers: Vec<GranularityTier>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Tiers a statement with this verb belongs in, highest first.
pub fn route_tiers(verb: &str, reg: &VerbRegistry) -> (Vec<GranularityTier>, Option<String>) {
    match reg.min_tier(verb) {
        Some(GranularityTier::Noise) => (vec![GranularityTier::Noise], None),
        Some(t) => (vec![t, GranularityTier::Noise], None),
        None => (vec![GranularityTier::Noise], Some(format!("unknown verb {verb}; routed to Noise only"))),
    }
}

#[derive(Debug, Default)]
struct Tier {
    store: RwLock<StatementStore>,
    journal: Mutex<Option<Journal>>,
}

fn slot(t: GranularityTier) -> usize {
    match t {
        GranularityTier::Noise => 0,
        GranularityTier::Transactional => 1,
        GranularityTier::Authoritative => 2,
    }
}

pub fn journal_file_name(t: GranularityTier) -> String {
    format!("{}.jsonl", t.as_str().to_ascii_lowercase())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct TierStats {
    pub count: usize,
    pub truncated_bytes: u64,
}

#[derive(Debug)]
pub struct TieredLrs {
    registry: VerbRegistry,
    tiers: [Tier; 3],
    data_dir: Option<PathBuf>,
    // Serialises whole forward operations so the duplicate check and the
    // writes to every target tier happen as one step per statement.
    writer: Mutex<()>,
    replayed: [u64; 3],
}

impl TieredLrs {
    pub fn in_memory(registry: VerbRegistry) -> Self {
        TieredLrs { registry, tiers: Default::default(), data_dir: None, writer: Mutex::new(()), replayed: [0; 3] }
    }

    /// Opens (creating if needed) one journal per tier under `dir` and
    /// replays them.
    pub fn open(dir: &Path, registry: VerbRegistry) -> Result<Self, JournalError> {
        std::fs::create_dir_all(dir).map_err(|source| JournalError::Io { path: dir.to_path_buf(), source })?;
        let mut lrs = Self::in_memory(registry);
        lrs.data_dir = Some(dir.to_path_buf());
        for t in GranularityTier::ALL {
            let (journal, replay) = Journal::open(&dir.join(journal_file_name(t)))?;
            let tier = &lrs.tiers[slot(t)];
            let mut store = tier.store.write();
            for (s, canonical) in replay.entries {
                if store.insert_canonical(s, canonical) == StoreOutcome::Conflict {
                    tracing::warn!(tier = %t, "conflicting duplicate id in journal; kept the first");
                }
            }
            drop(store);
            *tier.journal.lock() = Some(journal);
            lrs.replayed[slot(t)] = replay.truncated_bytes;
        }
        Ok(lrs)
    }

    /// Loads the journals under `dir` into memory without opening them for
    /// writing. The result has no journals attached.
    pub fn load_read_only(dir: &Path, registry: VerbRegistry) -> Result<Self, JournalError> {
        let lrs = Self::in_memory(registry);
        for t in GranularityTier::ALL {
            let replay = Journal::read_only(&dir.join(journal_file_name(t)))?;
            let mut store = lrs.tiers[slot(t)].store.write();
            for (s, canonical) in replay.entries {
                store.insert_canonical(s, canonical);
            }
        }
        Ok(lrs)
    }

    pub fn registry(&self) -> &VerbRegistry {
        &self.registry
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.data_dir.as_deref()
    }

    pub fn forward(&self, s: Statement) -> Result<ForwardOutcome, ForwardError> {
        let canonical = serialize_statement(&s)?;
        self.forward_canonical(s, canonical)
    }

    /// Validates every statement first; nothing is written if any is invalid.
    pub fn forward_batch(&self, stmts: Vec<Statement>) -> Result<Vec<ForwardOutcome>, ForwardError> {
        let prepared = stmts
            .into_iter()
            .enumerate()
            .map(|(index, s)| {
                let c = serialize_statement(&s).map_err(|source| ForwardError::InvalidInBatch { index, source })?;
                Ok((s, c))
            })
            .collect::<Result<Vec<_>, ForwardError>>()?;
        prepared.into_iter().map(|(s, c)| self.forward_canonical(s, c)).collect()
    }

    fn forward_canonical(&self, s: Statement, canonical: String) -> Result<ForwardOutcome, ForwardError> {
        let _w = self.writer.lock();
        let id = s.id;
        let outcome = self.tiers[0].store.read().classify(&id, &canonical);
        if outcome != StoreOutcome::Stored {
            return Ok(ForwardOutcome { id, outcome, tiers: Vec::new(), warning: None });
        }
        let (tiers, warning) = route_tiers(&s.verb.id, &self.registry);
        if let Some(w) = &warning {
            tracing::warn!(%id, "{w}");
        }
        for &t in &tiers {
            let tier = &self.tiers[slot(t)];
            // Journal first: a statement is never visible before it is durable.
            if let Some(j) = tier.journal.lock().as_mut() {
                j.append(&canonical)?;
            }
            tier.store.write().insert_canonical(s.clone(), canonical.clone());
        }
        Ok(ForwardOutcome { id, outcome, tiers, warning })
    }

    pub fn read(&self, t: GranularityTier) -> RwLockReadGuard<'_, StatementStore> {
        self.tiers[slot(t)].store.read()
    }

    pub fn query(&self, t: GranularityTier, f: &QueryFilter) -> Result<Page, QueryError> {
        self.read(t).query(f)
    }

    pub fn query_all(&self, t: GranularityTier, f: &QueryFilter) -> Result<Vec<Statement>, QueryError> {
        self.read(t).query_all(f)
    }

    /// Every statement in the tier, newest first.
    pub fn snapshot(&self, t: GranularityTier) -> Vec<Statement> {
        self.read(t).snapshot()
    }

    pub fn len(&self, t: GranularityTier) -> usize {
        self.read(t).len()
    }

    pub fn is_empty(&self) -> bool {
        GranularityTier::ALL.iter().all(|&t| self.read(t).is_empty())
    }

    pub fn stats(&self, t: GranularityTier) -> TierStats {
        TierStats { count: self.len(t), truncated_bytes: self.replayed[slot(t)] }
    }

    /// Order-independent content digest of a tier.
    pub fn digest(&self, t: GranularityTier) -> String {
        let store = self.read(t);
        let mut h = Sha256::new();
        for line in store.canonical_dump() {
            h.update(line.as_bytes());
            h.update(b"\n");
        }
        format!("sha256:{}", hex::encode(h.finalize()))
    }

    /// Forces journal contents to disk.
    pub fn flush(&self) -> Result<(), JournalError> {
        for tier in &self.tiers {
            if let Some(j) = tier.journal.lock().as_ref() {
                j.sync()?;
            }
        }
        Ok(())
    }
}
