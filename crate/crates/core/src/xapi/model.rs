use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

/// Storage granularity of a statement. Ordered `Noise < Transactional < Authoritative`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GranularityTier {
    Noise,
    Transactional,
    Authoritative,
}

impl GranularityTier {
    pub const ALL: [GranularityTier; 3] = [
        GranularityTier::Noise,
        GranularityTier::Transactional,
        GranularityTier::Authoritative,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GranularityTier::Noise => "Noise",
            GranularityTier::Transactional => "Transactional",
            GranularityTier::Authoritative => "Authoritative",
        }
    }
}

impl fmt::Display for GranularityTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GranularityTier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            // "noised" shows up as a synonym for the raw event tier.
            "noise" | "noised" => Ok(GranularityTier::Noise),
            "transactional" => Ok(GranularityTier::Transactional),
            "authoritative" => Ok(GranularityTier::Authoritative),
            _ => Err(format!("unknown tier {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CompetencyLevel {
    Novice,
    Intermediate,
    Expert,
}

impl CompetencyLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            CompetencyLevel::Novice => "Novice",
            CompetencyLevel::Intermediate => "Intermediate",
            CompetencyLevel::Expert => "Expert",
        }
    }
}

impl FromStr for CompetencyLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Novice" => Ok(CompetencyLevel::Novice),
            "Intermediate" => Ok(CompetencyLevel::Intermediate),
            "Expert" => Ok(CompetencyLevel::Expert),
            other => Err(format!("unknown competency level {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Account {
    pub home_page: String,
    pub name: String,
}

/// The "who" of a statement.
///
/// Mirrors the wire shape: `mbox` and `account` are both optional so that a
/// statement missing its identifier can still be represented and reported by
/// validation. A valid agent carries exactly one of them.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Agent {
    pub display_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mbox: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub account: Option<Account>,
}

impl Agent {
    pub fn mailbox(display_name: impl Into<String>, email: &str) -> Self {
        let mbox = if email.starts_with("mailto:") {
            email.to_string()
        } else {
            format!("mailto:{email}")
        };
        Agent { display_name: display_name.into(), mbox: Some(mbox), account: None }
    }

    pub fn account(
        display_name: impl Into<String>,
        home_page: impl Into<String>,
        name: impl Into<String>,
    ) -> Self {
        Agent {
            display_name: display_name.into(),
            mbox: None,
            account: Some(Account { home_page: home_page.into(), name: name.into() }),
        }
    }

    /// Stable identifier string used for indexing and filtering.
    ///
    /// `mailto:<address>` for mailbox agents, `account:<name>@<home page>` for
    /// account agents. `None` when the agent has no identifier.
    pub fn key(&self) -> Option<String> {
        match (&self.mbox, &self.account) {
            (Some(mbox), _) => Some(mbox.clone()),
            (None, Some(acct)) => Some(format!("account:{}@{}", acct.name, acct.home_page)),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Verb {
    pub id: String,
    pub display: String,
}

impl Verb {
    pub fn new(id: impl Into<String>, display: impl Into<String>) -> Self {
        Verb { id: id.into(), display: display.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActivityObject {
    pub id: String,
    pub name: String,
    pub activity_type: String,
    pub competency_level: Option<CompetencyLevel>,
}

impl ActivityObject {
    pub fn new(
        id: impl Into<String>,
        name: impl Into<String>,
        activity_type: impl Into<String>,
    ) -> Self {
        ActivityObject {
            id: id.into(),
            name: name.into(),
            activity_type: activity_type.into(),
            competency_level: None,
        }
    }

    pub fn with_competency(mut self, level: CompetencyLevel) -> Self {
        self.competency_level = Some(level);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatementResult {
    pub success: bool,
    pub score_scaled: Option<f64>,
    pub response: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatementContext {
    pub course_id: String,
    pub session_id: String,
}

/// One xAPI assertion.
#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub id: Uuid,
    pub actor: Agent,
    pub verb: Verb,
    pub object: ActivityObject,
    pub result: Option<StatementResult>,
    pub context: Option<StatementContext>,
    pub timestamp: DateTime<Utc>,
    pub tier: GranularityTier,
    /// Unrecognised top-level keys, kept verbatim and re-emitted after the
    /// known keys in sorted order.
    pub extensions: BTreeMap<String, serde_json::Value>,
}

impl Statement {
    pub fn new(
        id: Uuid,
        actor: Agent,
        verb: Verb,
        object: ActivityObject,
        timestamp: DateTime<Utc>,
        tier: GranularityTier,
    ) -> Self {
        Statement {
            id,
            actor,
            verb,
            object,
            result: None,
            context: None,
            timestamp,
            tier,
            extensions: BTreeMap::new(),
        }
    }

    pub fn with_result(mut self, result: StatementResult) -> Self {
        self.result = Some(result);
        self
    }

    pub fn with_context(mut self, context: StatementContext) -> Self {
        self.context = Some(context);
        self
    }

    pub fn actor_key(&self) -> Option<String> {
        self.actor.key()
    }
}

/// Source of statement ids. Production code uses [`RandomIds`]; tests inject
/// [`SequentialIds`] for reproducible output.
pub trait IdSource {
    fn next_id(&mut self) -> Uuid;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RandomIds;

impl IdSource for RandomIds {
    fn next_id(&mut self) -> Uuid {
        Uuid::new_v4()
    }
}

#[derive(Debug, Default, Clone)]
pub struct SequentialIds {
    next: u128,
}

impl SequentialIds {
    pub fn starting_at(next: u128) -> Self {
        SequentialIds { next }
    }
}

impl IdSource for SequentialIds {
    fn next_id(&mut self) -> Uuid {
        let id = Uuid::from_u128(self.next);
        self.next += 1;
        id
    }
}

/// Renders `<actor> <verb> <object>` plus ` (<competency>)` when present.
pub fn render_sentence(s: &Statement) -> String {
    let mut out = format!("{} {} {}", s.actor.display_name, s.verb.display, s.object.name);
    if let Some(level) = s.object.competency_level {
        out.push_str(" (");
        out.push_str(level.as_str());
        out.push(')');
    }
    out
}
