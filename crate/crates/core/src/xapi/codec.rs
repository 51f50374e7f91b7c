//! Canonical statement JSON.
//!
//! Key order is fixed: `actor, verb, object, result, context, timestamp, id,
//! tier`, followed by preserved unknown keys in sorted order. Output carries no
//! insignificant whitespace, so equal statements always produce equal bytes.

use std::collections::BTreeMap;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use serde_json::{Map, Value};
use uuid::Uuid;

use super::model::{
    Account, ActivityObject, Agent, CompetencyLevel, GranularityTier, Statement, StatementContext,
    StatementResult, Verb,
};
use super::validate::{validate_structure, Violation};

/// Top-level keys owned by the statement model. Anything else lands in
/// [`Statement::extensions`].
pub const RESERVED_KEYS: [&str; 8] =
    ["actor", "verb", "object", "result", "context", "timestamp", "id", "tier"];

const LANG: &str = "en-US";

#[derive(Debug, thiserror::Error)]
pub enum SerializeError {
    #[error("statement is invalid: {}", join(.0))]
    Invalid(Vec<Violation>),
}

fn join(vs: &[Violation]) -> String {
    vs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("{path}: {message}")]
    Field { path: String, message: String },
}

impl ParseError {
    fn field(path: impl Into<String>, message: impl Into<String>) -> Self {
        ParseError::Field { path: path.into(), message: message.into() }
    }

    pub(crate) fn from_json(err: &serde_json::Error, input: &[u8]) -> Self {
        ParseError::Syntax { offset: byte_offset(input, err.line(), err.column()), message: err.to_string() }
    }
}

/// Converts serde_json's 1-based line/column to a byte offset into `input`.
fn byte_offset(input: &[u8], line: usize, column: usize) -> usize {
    let mut offset = 0;
    for _ in 1..line {
        match input[offset..].iter().position(|&b| b == b'\n') {
            Some(p) => offset += p + 1,
            None => return input.len(),
        }
    }
    (offset + column.saturating_sub(1)).min(input.len())
}

#[derive(Serialize)]
struct LangMap<'a> {
    #[serde(rename = "en-US")]
    en_us: &'a str,
}

#[derive(Serialize)]
struct WireAccount<'a> {
    #[serde(rename = "homePage")]
    home_page: &'a str,
    name: &'a str,
}

#[derive(Serialize)]
struct WireAgent<'a> {
    #[serde(rename = "objectType")]
    object_type: &'static str,
    name: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    mbox: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    account: Option<WireAccount<'a>>,
}

#[derive(Serialize)]
struct WireVerb<'a> {
    id: &'a str,
    display: LangMap<'a>,
}

#[derive(Serialize)]
struct WireDefinition<'a> {
    name: LangMap<'a>,
    #[serde(rename = "type")]
    activity_type: &'a str,
    #[serde(rename = "competencyLevel", skip_serializing_if = "Option::is_none")]
    competency_level: Option<&'static str>,
}

#[derive(Serialize)]
struct WireObject<'a> {
    #[serde(rename = "objectType")]
    object_type: &'static str,
    id: &'a str,
    definition: WireDefinition<'a>,
}

#[derive(Serialize)]
struct WireScore {
    scaled: f64,
}

#[derive(Serialize)]
struct WireResult<'a> {
    success: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<WireScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    response: Option<&'a str>,
}

#[derive(Serialize)]
struct WireContext<'a> {
    #[serde(rename = "courseId")]
    course_id: &'a str,
    #[serde(rename = "sessionId")]
    session_id: &'a str,
}

#[derive(Serialize)]
struct WireStatement<'a> {
    actor: WireAgent<'a>,
    verb: WireVerb<'a>,
    object: WireObject<'a>,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<WireResult<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    context: Option<WireContext<'a>>,
    timestamp: String,
    id: String,
    tier: &'static str,
    #[serde(flatten)]
    extensions: &'a BTreeMap<String, Value>,
}

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

/// Parses an ISO-8601 / RFC 3339 instant with an explicit offset, normalised to UTC.
pub fn parse_timestamp(text: &str) -> Result<DateTime<Utc>, chrono::ParseError> {
    DateTime::parse_from_rfc3339(text).map(|dt| dt.with_timezone(&Utc))
}

fn to_wire(s: &Statement) -> WireStatement<'_> {
    WireStatement {
        actor: WireAgent {
            object_type: "Agent",
            name: &s.actor.display_name,
            mbox: s.actor.mbox.as_deref(),
            account: s
                .actor
                .account
                .as_ref()
                .map(|a| WireAccount { home_page: &a.home_page, name: &a.name }),
        },
        verb: WireVerb { id: &s.verb.id, display: LangMap { en_us: &s.verb.display } },
        object: WireObject {
            object_type: "Activity",
            id: &s.object.id,
            definition: WireDefinition {
                name: LangMap { en_us: &s.object.name },
                activity_type: &s.object.activity_type,
                competency_level: s.object.competency_level.map(CompetencyLevel::as_str),
            },
        },
        result: s.result.as_ref().map(|r| WireResult {
            success: r.success,
            score: r.score_scaled.map(|scaled| WireScore { scaled }),
            response: r.response.as_deref(),
        }),
        context: s
            .context
            .as_ref()
            .map(|c| WireContext { course_id: &c.course_id, session_id: &c.session_id }),
        timestamp: format_timestamp(&s.timestamp),
        id: s.id.hyphenated().to_string(),
        tier: s.tier.as_str(),
        extensions: &s.extensions,
    }
}

/// Canonical JSON for a structurally valid statement.
pub fn serialize_statement(s: &Statement) -> Result<String, SerializeError> {
    let violations = validate_structure(s);
    if !violations.is_empty() {
        return Err(SerializeError::Invalid(violations));
    }
    Ok(serde_json::to_string(&to_wire(s)).expect("wire statement always serializes"))
}

/// Parses canonical statement JSON. Unknown top-level keys are kept in
/// [`Statement::extensions`]; timestamps are normalised to UTC.
pub fn parse_statement(bytes: &[u8]) -> Result<Statement, ParseError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| ParseError::from_json(&e, bytes))?;
    statement_from_value(value)
}

pub fn statement_from_value(value: Value) -> Result<Statement, ParseError> {
    let Value::Object(mut root) = value else {
        return Err(ParseError::field("$", "expected a JSON object"));
    };
    let actor = parse_agent(&take_object(&mut root, "", "actor")?, "actor")?;
    let verb = {
        let obj = take_object(&mut root, "", "verb")?;
        Verb { id: req_str(&obj, "verb", "id")?, display: lang_map(&obj, "verb", "display")? }
    };
    let object = parse_object(&take_object(&mut root, "", "object")?)?;
    let result = match root.remove("result") {
        None | Some(Value::Null) => None,
        Some(Value::Object(obj)) => Some(parse_result(&obj)?),
        Some(_) => return Err(ParseError::field("result", "expected an object")),
    };
    let context = match root.remove("context") {
        None | Some(Value::Null) => None,
        Some(Value::Object(obj)) => Some(StatementContext {
            course_id: req_str(&obj, "context", "courseId")?,
            session_id: req_str(&obj, "context", "sessionId")?,
        }),
        Some(_) => return Err(ParseError::field("context", "expected an object")),
    };
    let ts_text = take_str(&mut root, "timestamp")?;
    let timestamp =
        parse_timestamp(&ts_text).map_err(|e| ParseError::field("timestamp", format!("{ts_text:?}: {e}")))?;
    let id_text = take_str(&mut root, "id")?;
    let id = Uuid::parse_str(&id_text).map_err(|e| ParseError::field("id", e.to_string()))?;
    let tier = match root.remove("tier") {
        // Statements from third-party producers carry no tier; they enter at the bottom.
        None => GranularityTier::Noise,
        Some(Value::String(t)) => t.parse().map_err(|e: String| ParseError::field("tier", e))?,
        Some(_) => return Err(ParseError::field("tier", "expected a string")),
    };
    let extensions: BTreeMap<String, Value> = root.into_iter().collect();
    Ok(Statement { id, actor, verb, object, result, context, timestamp, tier, extensions })
}

fn path(parent: &str, key: &str) -> String {
    if parent.is_empty() {
        key.to_string()
    } else {
        format!("{parent}.{key}")
    }
}

fn take_object(root: &mut Map<String, Value>, parent: &str, key: &str) -> Result<Map<String, Value>, ParseError> {
    match root.remove(key) {
        Some(Value::Object(obj)) => Ok(obj),
        Some(_) => Err(ParseError::field(path(parent, key), "expected an object")),
        None => Err(ParseError::field(path(parent, key), "missing required key")),
    }
}

fn take_str(root: &mut Map<String, Value>, key: &str) -> Result<String, ParseError> {
    match root.remove(key) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(ParseError::field(key, "expected a string")),
        None => Err(ParseError::field(key, "missing required key")),
    }
}

fn req_str(obj: &Map<String, Value>, parent: &str, key: &str) -> Result<String, ParseError> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(ParseError::field(path(parent, key), "expected a string")),
        None => Err(ParseError::field(path(parent, key), "missing required key")),
    }
}

fn opt_str(obj: &Map<String, Value>, parent: &str, key: &str) -> Result<Option<String>, ParseError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(ParseError::field(path(parent, key), "expected a string")),
    }
}

/// Reads a language map, preferring `en-US` and falling back to the first entry.
fn lang_map(obj: &Map<String, Value>, parent: &str, key: &str) -> Result<String, ParseError> {
    let p = path(parent, key);
    let map = match obj.get(key) {
        Some(Value::Object(m)) => m,
        Some(_) => return Err(ParseError::field(p, "expected a language map")),
        None => return Err(ParseError::field(p, "missing required key")),
    };
    let entry = map.get(LANG).or_else(|| map.values().next());
    match entry {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(ParseError::field(p, "language map values must be strings")),
        None => Err(ParseError::field(p, "language map is empty")),
    }
}

fn check_object_type(obj: &Map<String, Value>, parent: &str, expected: &str) -> Result<(), ParseError> {
    match opt_str(obj, parent, "objectType")? {
        Some(t) if t != expected => {
            Err(ParseError::field(path(parent, "objectType"), format!("expected {expected:?}, found {t:?}")))
        }
        _ => Ok(()),
    }
}

fn parse_agent(obj: &Map<String, Value>, parent: &str) -> Result<Agent, ParseError> {
    check_object_type(obj, parent, "Agent")?;
    let account = match obj.get("account") {
        None | Some(Value::Null) => None,
        Some(Value::Object(acct)) => {
            let p = path(parent, "account");
            Some(Account { home_page: req_str(acct, &p, "homePage")?, name: req_str(acct, &p, "name")? })
        }
        Some(_) => return Err(ParseError::field(path(parent, "account"), "expected an object")),
    };
    Ok(Agent { display_name: req_str(obj, parent, "name")?, mbox: opt_str(obj, parent, "mbox")?, account })
}

fn parse_object(obj: &Map<String, Value>) -> Result<ActivityObject, ParseError> {
    check_object_type(obj, "object", "Activity")?;
    let id = req_str(obj, "object", "id")?;
    let def = match obj.get("definition") {
        Some(Value::Object(d)) => d,
        Some(_) => return Err(ParseError::field("object.definition", "expected an object")),
        None => return Err(ParseError::field("object.definition", "missing required key")),
    };
    let competency_level = opt_str(def, "object.definition", "competencyLevel")?
        .map(|c| c.parse::<CompetencyLevel>())
        .transpose()
        .map_err(|e| ParseError::field("object.definition.competencyLevel", e))?;
    Ok(ActivityObject {
        id,
        name: lang_map(def, "object.definition", "name")?,
        activity_type: req_str(def, "object.definition", "type")?,
        competency_level,
    })
}

fn parse_result(obj: &Map<String, Value>) -> Result<StatementResult, ParseError> {
    let success = match obj.get("success") {
        Some(Value::Bool(b)) => *b,
        Some(_) => return Err(ParseError::field("result.success", "expected a boolean")),
        None => return Err(ParseError::field("result.success", "missing required key")),
    };
    let score_scaled = match obj.get("score") {
        None | Some(Value::Null) => None,
        Some(Value::Object(score)) => match score.get("scaled") {
            Some(Value::Number(n)) => n.as_f64(),
            Some(_) => return Err(ParseError::field("result.score.scaled", "expected a number")),
            None => return Err(ParseError::field("result.score.scaled", "missing required key")),
        },
        Some(_) => return Err(ParseError::field("result.score", "expected an object")),
    };
    Ok(StatementResult { success, score_scaled, response: opt_str(obj, "result", "response")? })
}
