//! In-memory statement store with actor, verb and time indexes, plus the
//! filtered, cursor-paginated query.

use std::collections::{BTreeSet, HashMap};
use std::ops::Bound;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use chrono::{DateTime, Utc};
use uuid::Uuid;
use vita_core::xapi::{format_timestamp, parse_timestamp, serialize_statement, SerializeError, Statement};

pub const DEFAULT_LIMIT: usize = 100;

/// Position of a row in the newest-first order.
pub type Key = (DateTime<Utc>, Uuid);

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StoreOutcome {
    Stored,
    Duplicate,
    Conflict,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("malformed cursor")]
    BadCursor,
    #[error("limit must be positive")]
    BadLimit,
    #[error("since must not be after until")]
    InvertedRange,
}

/// Opaque pagination token: the (timestamp, id) of the last row returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cursor(pub Key);

impl Cursor {
    pub fn encode(&self) -> String {
        URL_SAFE_NO_PAD.encode(format!("{}|{}", format_timestamp(&self.0 .0), self.0 .1))
    }

    pub fn decode(token: &str) -> Result<Self, QueryError> {
        let raw = URL_SAFE_NO_PAD.decode(token).map_err(|_| QueryError::BadCursor)?;
        let text = String::from_utf8(raw).map_err(|_| QueryError::BadCursor)?;
        let (ts, id) = text.split_once('|').ok_or(QueryError::BadCursor)?;
        let ts = parse_timestamp(ts).map_err(|_| QueryError::BadCursor)?;
        let id = Uuid::parse_str(id).map_err(|_| QueryError::BadCursor)?;
        Ok(Cursor((ts, id)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryFilter {
    /// Agent key, as produced by `Agent::key`.
    pub agent: Option<String>,
    pub verb: Option<String>,
    pub since: Option<DateTime<Utc>>,
    pub until: Option<DateTime<Utc>>,
    pub limit: usize,
    pub cursor: Option<Cursor>,
}

impl Default for QueryFilter {
    fn default() -> Self {
        QueryFilter { agent: None, verb: None, since: None, until: None, limit: DEFAULT_LIMIT, cursor: None }
    }
}

impl QueryFilter {
    pub fn validate(&self) -> Result<(), QueryError> {
        if self.limit == 0 {
            return Err(QueryError::BadLimit);
        }
        if let (Some(s), Some(u)) = (self.since, self.until) {
            if s > u {
                return Err(QueryError::InvertedRange);
            }
        }
        Ok(())
    }

    /// Whether `s` satisfies every present field except the cursor. `since`
    /// and `until` are both inclusive.
    pub fn matches(&self, s: &Statement) -> bool {
        self.agent.as_ref().is_none_or(|a| s.actor_key().as_deref() == Some(a))
            && self.verb.as_ref().is_none_or(|v| &s.verb.id == v)
            && self.since.is_none_or(|t| s.timestamp >= t)
            && self.until.is_none_or(|t| s.timestamp <= t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Page {
    pub statements: Vec<Statement>,
    pub next: Option<Cursor>,
}

#[derive(Debug, Clone)]
struct Entry {
    statement: Statement,
    canonical: String,
}

#[derive(Debug, Clone, Default)]
pub struct StatementStore {
    by_id: HashMap<Uuid, Entry>,
    by_time: BTreeSet<Key>,
    by_actor: HashMap<String, BTreeSet<Key>>,
    by_verb: HashMap<String, BTreeSet<Key>>,
}

fn key_of(s: &Statement) -> Key {
    (s.timestamp, s.id)
}

impl StatementStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn get(&self, id: &Uuid) -> Option<&Statement> {
        self.by_id.get(id).map(|e| &e.statement)
    }

    pub fn canonical(&self, id: &Uuid) -> Option<&str> {
        self.by_id.get(id).map(|e| e.canonical.as_str())
    }

    /// What inserting a statement with this id and canonical body would do,
    /// without doing it.
    pub fn classify(&self, id: &Uuid, canonical: &str) -> StoreOutcome {
        match self.by_id.get(id) {
            None => StoreOutcome::Stored,
            Some(e) if e.canonical == canonical => StoreOutcome::Duplicate,
            Some(_) => StoreOutcome::Conflict,
        }
    }

    pub fn insert(&mut self, s: Statement) -> Result<StoreOutcome, SerializeError> {
        let canonical = serialize_statement(&s)?;
        Ok(self.insert_canonical(s, canonical))
    }

    /// Inserts with a precomputed canonical body, which must be
    /// `serialize_statement(&s)`.
    pub fn insert_canonical(&mut self, s: Statement, canonical: String) -> StoreOutcome {
        let outcome = self.classify(&s.id, &canonical);
        if outcome != StoreOutcome::Stored {
            return outcome;
        }
        let key = key_of(&s);
        self.by_time.insert(key);
        if let Some(actor) = s.actor_key() {
            self.by_actor.entry(actor).or_default().insert(key);
        }
        self.by_verb.entry(s.verb.id.clone()).or_default().insert(key);
        self.by_id.insert(s.id, Entry { statement: s, canonical });
        outcome
    }

    /// All statements, newest first.
    pub fn iter_newest_first(&self) -> impl Iterator<Item = &Statement> + '_ {
        self.by_time.iter().rev().map(|(_, id)| &self.by_id[id].statement)
    }

    /// Canonical bodies ordered by id; equal stores give equal output.
    pub fn canonical_dump(&self) -> Vec<&str> {
        let mut ids: Vec<&Uuid> = self.by_id.keys().collect();
        ids.sort();
        ids.into_iter().map(|id| self.by_id[id].canonical.as_str()).collect()
    }

    pub fn snapshot(&self) -> Vec<Statement> {
        self.iter_newest_first().cloned().collect()
    }

    pub fn query(&self, f: &QueryFilter) -> Result<Page, QueryError> {
        f.validate()?;
        let empty = BTreeSet::new();
        // Walk the narrowest index that the filter pins down.
        let mut candidates: Vec<&BTreeSet<Key>> = Vec::new();
        if let Some(a) = &f.agent {
            candidates.push(self.by_actor.get(a).unwrap_or(&empty));
        }
        if let Some(v) = &f.verb {
            candidates.push(self.by_verb.get(v).unwrap_or(&empty));
        }
        let index = candidates.into_iter().min_by_key(|s| s.len()).unwrap_or(&self.by_time);

        let lower = match f.since {
            Some(t) => Bound::Included((t, Uuid::nil())),
            None => Bound::Unbounded,
        };
        let until_bound = f.until.map(|t| (t, Uuid::max()));
        let upper = match (f.cursor, until_bound) {
            (Some(Cursor(c)), Some(u)) if u < c => Bound::Included(u),
            (Some(Cursor(c)), _) => Bound::Excluded(c),
            (None, Some(u)) => Bound::Included(u),
            (None, None) => Bound::Unbounded,
        };
        if let (Bound::Included(l), Bound::Included(u) | Bound::Excluded(u)) = (lower, upper) {
            if l > u {
                return Ok(Page { statements: Vec::new(), next: None });
            }
        }

        let mut out = Vec::new();
        let mut more = false;
        for key in index.range((lower, upper)).rev() {
            let s = &self.by_id[&key.1].statement;
            if !f.matches(s) {
                continue;
            }
            if out.len() == f.limit {
                more = true;
                break;
            }
            out.push(s.clone());
        }
        let next = if more { out.last().map(|s| Cursor(key_of(s))) } else { None };
        Ok(Page { statements: out, next })
    }

    /// Every match, newest first, ignoring limit and cursor.
    pub fn query_all(&self, f: &QueryFilter) -> Result<Vec<Statement>, QueryError> {
        let f = QueryFilter { limit: usize::MAX, cursor: None, ..f.clone() };
        Ok(self.query(&f)?.statements)
    }

    /// Checks that every index agrees with the id map.
    pub fn indexes_consistent(&self) -> bool {
        if self.by_time.len() != self.by_id.len() {
            return false;
        }
        let mut actor_total = 0;
        for (actor, keys) in &self.by_actor {
            actor_total += keys.len();
            if !keys.iter().all(|k| self.by_id.get(&k.1).is_some_and(|e| key_of(&e.statement) == *k && e.statement.actor_key().as_ref() == Some(actor))) {
                return false;
            }
        }
        let mut verb_total = 0;
        for (verb, keys) in &self.by_verb {
            verb_total += keys.len();
            if !keys.iter().all(|k| self.by_id.get(&k.1).is_some_and(|e| key_of(&e.statement) == *k && &e.statement.verb.id == verb)) {
                return false;
            }
        }
        let keyed = self.by_id.values().filter(|e| e.statement.actor_key().is_some()).count();
        actor_total == keyed
            && verb_total == self.by_id.len()
            && self.by_time.iter().all(|k| self.by_id.get(&k.1).is_some_and(|e| key_of(&e.statement) == *k))
    }
}
