//! Chat-log export parsing and the log-to-statement transformation.
//!
//! Accepted input is either a bare JSON array of entries or an envelope
//! `{"version": 1, "entries": [...]}`. Each entry:
//!
//! | key                  | type                         | notes                          |
//! |----------------------|------------------------------|--------------------------------|
//! | `user`               | string                       | learner display name           |
//! | `userid`             | string or integer            | LMS user id                    |
//! | `message` / `query`  | string                       | learner question, non-empty    |
//! | `response`           | string                       | tutor reply; missing -> empty  |
//! | `time`               | RFC 3339 string or unix secs |                                |
//! | `courseid`           | IRI string or integer        | integers map to `<lms>/course/<id>` |
//! | `sessionid`          | string or integer            |                                |

use chrono::{DateTime, TimeZone, Utc};
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use uuid::Uuid;

use crate::xapi::{
    activity_types, format_timestamp, is_iri, parse_timestamp, verbs, ActivityObject, Agent, GranularityTier,
    ParseError, Statement, StatementContext, StatementResult, VerbRegistry, Violation,
};

pub const SCHEMA_VERSION: u64 = 1;
/// Home page for learner accounts and prefix for numeric course ids.
pub const LMS_HOME_PAGE: &str = "https://lms.vita.local";
pub const TUTOR_NAME: &str = "BotCaptain";
pub const QUESTION_NAME_CHARS: usize = 120;

/// Namespace for deterministic statement ids derived from chat-log records.
const STATEMENT_NAMESPACE: Uuid = Uuid::from_u128(0x6a1c_2e7d_4b0f_5c3a_9e21_7d44_b0c5_f3a8);

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChatLogRecord {
    pub user_name: String,
    pub user_id: String,
    pub query_text: String,
    pub response_text: String,
    pub timestamp: DateTime<Utc>,
    pub course_id: String,
    pub session_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseWarning {
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedLog {
    pub records: Vec<ChatLogRecord>,
    pub warnings: Vec<ParseWarning>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChatLogError {
    #[error("chat log is not valid JSON: {0}")]
    Json(ParseError),
    #[error("chat log container: {0}")]
    Container(String),
    #[error("unsupported chat log schema version {0}")]
    UnknownVersion(String),
    #[error("entry {index}: {reason}")]
    BadEntry { index: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransformError {
    #[error("record rejected: {0}")]
    InvalidRecord(String),
    #[error("verb {0} is not in the registry")]
    MissingVerb(&'static str),
    #[error("produced an invalid statement: {0:?}")]
    InvalidStatement(Vec<Violation>),
}

pub fn parse_chat_log(bytes: &[u8]) -> Result<ParsedLog, ChatLogError> {
    let root: Value =
        serde_json::from_slice(bytes).map_err(|e| ChatLogError::Json(ParseError::from_json(&e, bytes)))?;
    let entries = match root {
        Value::Array(entries) => entries,
        Value::Object(mut obj) => {
            match obj.get("version") {
                None => {}
                Some(Value::Number(n)) if n.as_u64() == Some(SCHEMA_VERSION) => {}
                Some(other) => return Err(ChatLogError::UnknownVersion(other.to_string())),
            }
            match obj.remove("entries") {
                Some(Value::Array(entries)) => entries,
                Some(_) => return Err(ChatLogError::Container("\"entries\" must be an array".into())),
                None => return Err(ChatLogError::Container("missing \"entries\" array".into())),
            }
        }
        _ => return Err(ChatLogError::Container("expected an array or an object with \"entries\"".into())),
    };
    let mut parsed = ParsedLog { records: Vec::with_capacity(entries.len()), warnings: Vec::new() };
    for (index, entry) in entries.into_iter().enumerate() {
        let Value::Object(obj) = entry else {
            return Err(ChatLogError::BadEntry { index, reason: "expected an object".into() });
        };
        let bad = |reason: String| ChatLogError::BadEntry { index, reason };
        let user_name = text_field(&obj, "user").map_err(bad)?;
        let user_id = id_field(&obj, "userid").map_err(bad)?;
        let query_text = match obj.get("message").or_else(|| obj.get("query")) {
            Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
            Some(Value::String(_)) => return Err(bad("query text is empty".into())),
            Some(_) => return Err(bad("\"message\" must be a string".into())),
            None => return Err(bad("missing \"message\"".into())),
        };
        let response_text = match obj.get("response") {
            Some(Value::String(s)) => s.clone(),
            None | Some(Value::Null) => {
                parsed.warnings.push(ParseWarning { index, message: "missing response, recorded as empty".into() });
                String::new()
            }
            Some(_) => return Err(bad("\"response\" must be a string".into())),
        };
        let timestamp = time_field(&obj).map_err(bad)?;
        let course_id = course_field(&obj).map_err(bad)?;
        let session_id = id_field(&obj, "sessionid").map_err(bad)?;
        parsed.records.push(ChatLogRecord {
            user_name,
            user_id,
            query_text,
            response_text,
            timestamp,
            course_id,
            session_id,
        });
    }
    Ok(parsed)
}

fn text_field(obj: &Map<String, Value>, key: &str) -> Result<String, String> {
    match obj.get(key) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
        Some(Value::String(_)) => Err(format!("\"{key}\" is empty")),
        Some(_) => Err(format!("\"{key}\" must be a string")),
        None => Err(format!("missing \"{key}\"")),
    }
}

fn id_field(obj: &Map<String, Value>, key: &str) -> Result<String, String> {
    match obj.get(key) {
        Some(Value::Number(n)) => Ok(n.to_string()),
        _ => text_field(obj, key),
    }
}

fn time_field(obj: &Map<String, Value>) -> Result<DateTime<Utc>, String> {
    match obj.get("time") {
        Some(Value::String(s)) => parse_timestamp(s).map_err(|e| format!("bad \"time\" {s:?}: {e}")),
        Some(Value::Number(n)) => n
            .as_i64()
            .and_then(|secs| Utc.timestamp_opt(secs, 0).single())
            .ok_or_else(|| format!("bad \"time\" {n}")),
        Some(_) => Err("\"time\" must be a string or integer".into()),
        None => Err("missing \"time\"".into()),
    }
}

fn course_field(obj: &Map<String, Value>) -> Result<String, String> {
    let raw = id_field(obj, "courseid")?;
    course_iri(&raw).ok_or_else(|| format!("\"courseid\" {raw:?} is neither an IRI nor a plain id"))
}

/// IRIs pass through; plain ids (alphanumeric, `-`, `_`) map under the LMS home page.
pub fn course_iri(raw: &str) -> Option<String> {
    if is_iri(raw) {
        Some(raw.to_string())
    } else if !raw.is_empty() && raw.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        Some(format!("{LMS_HOME_PAGE}/course/{raw}"))
    } else {
        None
    }
}

fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// First 120 characters of the whitespace-normalised query.
pub fn question_name(query: &str) -> String {
    normalize_whitespace(query).chars().take(QUESTION_NAME_CHARS).collect()
}

fn query_hash(course_id: &str, query: &str) -> String {
    let mut h = Sha256::new();
    h.update(course_id.as_bytes());
    h.update(b"\n");
    h.update(normalize_whitespace(query).as_bytes());
    hex::encode(&h.finalize()[..16])
}

/// Activity IRI for a question: identical normalised questions in the same
/// course share one activity.
pub fn question_activity_id(course_id: &str, query: &str) -> String {
    format!("urn:vita:question:{}", query_hash(course_id, query))
}

fn record_statement_id(r: &ChatLogRecord, role: &str) -> Uuid {
    let name = format!(
        "{}\u{1f}{}\u{1f}{}\u{1f}{}",
        r.user_id,
        format_timestamp(&r.timestamp),
        role,
        query_hash(&r.course_id, &r.query_text)
    );
    Uuid::new_v5(&STATEMENT_NAMESPACE, name.as_bytes())
}

pub fn learner_agent(r: &ChatLogRecord) -> Agent {
    Agent::account(r.user_name.clone(), LMS_HOME_PAGE, r.user_id.clone())
}

pub fn tutor_agent() -> Agent {
    Agent::account(TUTOR_NAME, LMS_HOME_PAGE, "botcaptain")
}

/// Produces the `asked` / `responded` statement pair for one interaction,
/// attributing the question to the record's user.
pub fn transform_record(r: &ChatLogRecord, reg: &VerbRegistry) -> Result<[Statement; 2], TransformError> {
    transform_record_as(r, learner_agent(r), reg)
}

/// Like [`transform_record`] but with an explicit learner agent.
pub fn transform_record_as(
    r: &ChatLogRecord,
    learner: Agent,
    reg: &VerbRegistry,
) -> Result<[Statement; 2], TransformError> {
    if r.query_text.trim().is_empty() {
        return Err(TransformError::InvalidRecord("query text is empty".into()));
    }
    if !is_iri(&r.course_id) {
        return Err(TransformError::InvalidRecord(format!("course id {:?} is not an IRI", r.course_id)));
    }
    let asked = reg.verb(verbs::ASKED).ok_or(TransformError::MissingVerb("asked"))?;
    let responded = reg.verb(verbs::RESPONDED).ok_or(TransformError::MissingVerb("responded"))?;
    let question = ActivityObject::new(
        question_activity_id(&r.course_id, &r.query_text),
        question_name(&r.query_text),
        activity_types::QUESTION,
    );
    let context = StatementContext { course_id: r.course_id.clone(), session_id: r.session_id.clone() };

    let ask = Statement::new(
        record_statement_id(r, "asked"),
        learner,
        asked,
        question.clone(),
        r.timestamp,
        GranularityTier::Noise,
    )
    .with_context(context.clone());
    let reply = Statement::new(
        record_statement_id(r, "responded"),
        tutor_agent(),
        responded,
        question,
        r.timestamp,
        GranularityTier::Noise,
    )
    .with_result(StatementResult {
        success: !r.response_text.is_empty(),
        score_scaled: None,
        response: Some(r.response_text.clone()),
    })
    .with_context(context);

    for s in [&ask, &reply] {
        crate::xapi::validate_statement(s, reg).map_err(TransformError::InvalidStatement)?;
    }
    Ok([ask, reply])
}

/// Transforms a batch, two statements per record, preserving record order.
pub fn transform_batch(records: &[ChatLogRecord], reg: &VerbRegistry) -> Result<Vec<Statement>, TransformError> {
    let pairs = crate::par::try_map_collect(records, |r| transform_record(r, reg))?;
    Ok(pairs.into_iter().flatten().collect())
}
