use std::collections::BTreeMap;
use std::path::Path;

use super::model::{GranularityTier, Verb};

/// Verb IRIs seeded into [`VerbRegistry::standard`].
pub mod verbs {
    pub const VIEWED: &str = "http://id.tincanapi.com/verb/viewed";
    pub const ASKED: &str = "http://adlnet.gov/expapi/verbs/asked";
    pub const RESPONDED: &str = "http://adlnet.gov/expapi/verbs/responded";
    pub const ATTENDED: &str = "http://adlnet.gov/expapi/verbs/attended";
    pub const REGISTERED: &str = "http://adlnet.gov/expapi/verbs/registered";
    pub const PASSED: &str = "http://adlnet.gov/expapi/verbs/passed";
    pub const FAILED: &str = "http://adlnet.gov/expapi/verbs/failed";
    pub const COMPLETED: &str = "http://adlnet.gov/expapi/verbs/completed";
    pub const ASSERTED: &str = "https://w3id.org/xapi/vita/verbs/asserted";
    pub const ROUTED: &str = "https://w3id.org/xapi/vita/verbs/routed";
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerbEntry {
    pub display: String,
    pub min_tier: GranularityTier,
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("registry line {line}: {reason}")]
    Line { line: usize, reason: String },
    #[error("reading registry file: {0}")]
    Io(#[from] std::io::Error),
}

/// Closed verb vocabulary. Each IRI maps to its display text and the lowest
/// tier its statements are routed to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerbRegistry {
    entries: BTreeMap<String, VerbEntry>,
}

const STANDARD: &[(&str, &str, GranularityTier)] = &[
    (verbs::VIEWED, "viewed", GranularityTier::Noise),
    (verbs::ASKED, "asked", GranularityTier::Noise),
    (verbs::RESPONDED, "responded", GranularityTier::Noise),
    (verbs::ATTENDED, "attended", GranularityTier::Transactional),
    (verbs::REGISTERED, "registered", GranularityTier::Transactional),
    (verbs::PASSED, "passed", GranularityTier::Transactional),
    (verbs::FAILED, "failed", GranularityTier::Transactional),
    (verbs::COMPLETED, "completed", GranularityTier::Transactional),
    (verbs::ASSERTED, "asserted", GranularityTier::Authoritative),
    (verbs::ROUTED, "routed", GranularityTier::Transactional),
];

impl Default for VerbRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

impl VerbRegistry {
    pub fn empty() -> Self {
        VerbRegistry { entries: BTreeMap::new() }
    }

    pub fn standard() -> Self {
        let mut reg = Self::empty();
        for (iri, display, tier) in STANDARD {
            reg.register(*iri, *display, *tier);
        }
        reg
    }

    /// Adds or replaces an entry.
    pub fn register(&mut self, iri: impl Into<String>, display: impl Into<String>, min_tier: GranularityTier) {
        self.entries.insert(iri.into(), VerbEntry { display: display.into(), min_tier });
    }

    pub fn contains(&self, iri: &str) -> bool {
        self.entries.contains_key(iri)
    }

    pub fn get(&self, iri: &str) -> Option<&VerbEntry> {
        self.entries.get(iri)
    }

    pub fn min_tier(&self, iri: &str) -> Option<GranularityTier> {
        self.entries.get(iri).map(|e| e.min_tier)
    }

    /// Builds the [`Verb`] for a registered IRI.
    pub fn verb(&self, iri: &str) -> Option<Verb> {
        self.entries.get(iri).map(|e| Verb::new(iri, e.display.clone()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &VerbEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses the registry config format: one `<iri> <display> <tier>` record
    /// per line, whitespace separated. Blank lines and `#` comments are ignored.
    /// Entries are merged over the standard vocabulary.
    pub fn from_config_str(text: &str) -> Result<Self, RegistryError> {
        let mut reg = Self::standard();
        reg.merge_config_str(text)?;
        Ok(reg)
    }

    pub fn merge_config_str(&mut self, text: &str) -> Result<(), RegistryError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [iri, display, tier] = fields[..] else {
                return Err(RegistryError::Line {
                    line: idx + 1,
                    reason: format!("expected 3 fields, found {}", fields.len()),
                });
            };
            if !super::validate::is_iri(iri) {
                return Err(RegistryError::Line { line: idx + 1, reason: format!("{iri:?} is not an IRI") });
            }
            let tier = tier
                .parse::<GranularityTier>()
                .map_err(|reason| RegistryError::Line { line: idx + 1, reason })?;
            self.register(iri, display, tier);
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        Self::from_config_str(&std::fs::read_to_string(path)?)
    }

    /// Config-format dump, parseable by [`VerbRegistry::from_config_str`].
    pub fn to_config_string(&self) -> String {
        self.entries
            .iter()
            .map(|(iri, e)| format!("{iri} {} {}\n", e.display, e.min_tier))
            .collect()
    }
}
