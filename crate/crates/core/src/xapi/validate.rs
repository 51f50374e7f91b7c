use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use super::codec::RESERVED_KEYS;
use super::model::Statement;
use super::registry::VerbRegistry;

/// A single failed invariant, named by the wire path of the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Violation { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// `scheme ":" rest`, scheme per RFC 3987, no whitespace, non-empty rest.
pub fn is_iri(s: &str) -> bool {
    let Some((scheme, rest)) = s.split_once(':') else {
        return false;
    };
    let mut chars = scheme.chars();
    let starts_alpha = chars.next().is_some_and(|c| c.is_ascii_alphabetic());
    starts_alpha
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
        && !rest.is_empty()
        && !s.chars().any(|c| c.is_whitespace() || c.is_control())
}

pub fn is_mailto(s: &str) -> bool {
    let Some(addr) = s.strip_prefix("mailto:") else {
        return false;
    };
    let Some((local, domain)) = addr.split_once('@') else {
        return false;
    };
    !local.is_empty()
        && !domain.is_empty()
        && !domain.contains('@')
        && !domain.starts_with('.')
        && !domain.ends_with('.')
        && !addr.chars().any(|c| c.is_whitespace() || c.is_control())
}

/// Checks every invariant that does not depend on the verb vocabulary.
pub fn validate_structure(s: &Statement) -> Vec<Violation> {
    let mut out = Vec::new();
    let actor = &s.actor;
    if actor.display_name.trim().is_empty() {
        out.push(Violation::new("actor.name", "display name is empty"));
    }
    match (&actor.mbox, &actor.account) {
        (None, None) => out.push(Violation::new("actor.identifier", "no mbox or account present")),
        (Some(_), Some(_)) => {
            out.push(Violation::new("actor.identifier", "both mbox and account present"))
        }
        (Some(mbox), None) => {
            if !is_mailto(mbox) {
                out.push(Violation::new("actor.mbox", format!("{mbox:?} is not a mailto: IRI")));
            }
        }
        (None, Some(acct)) => {
            if !is_iri(&acct.home_page) {
                out.push(Violation::new("actor.account.homePage", "not an IRI"));
            }
            if acct.name.trim().is_empty() {
                out.push(Violation::new("actor.account.name", "account name is empty"));
            }
        }
    }
    if !is_iri(&s.verb.id) {
        out.push(Violation::new("verb.id", format!("{:?} is not an IRI", s.verb.id)));
    }
    if s.verb.display.trim().is_empty() {
        out.push(Violation::new("verb.display", "display is empty"));
    }
    if !is_iri(&s.object.id) {
        out.push(Violation::new("object.id", format!("{:?} is not an IRI", s.object.id)));
    }
    if s.object.name.trim().is_empty() {
        out.push(Violation::new("object.definition.name", "activity name is empty"));
    }
    if !is_iri(&s.object.activity_type) {
        out.push(Violation::new("object.definition.type", "not an IRI"));
    }
    if let Some(result) = &s.result {
        if let Some(score) = result.score_scaled {
            if !(0.0..=1.0).contains(&score) {
                out.push(Violation::new("result.score.scaled", format!("{score} outside [0,1]")));
            }
        }
    }
    if let Some(ctx) = &s.context {
        if !is_iri(&ctx.course_id) {
            out.push(Violation::new("context.courseId", "not an IRI"));
        }
    }
    for key in s.extensions.keys() {
        if RESERVED_KEYS.contains(&key.as_str()) {
            out.push(Violation::new(format!("extensions.{key}"), "collides with a statement key"));
        }
    }
    out
}

/// Full validation: structure plus closed-vocabulary membership of the verb.
pub fn validate_statement(s: &Statement, reg: &VerbRegistry) -> Result<(), Vec<Violation>> {
    let mut violations = validate_structure(s);
    if is_iri(&s.verb.id) && !reg.contains(&s.verb.id) {
        violations.push(Violation::new("verb.id", format!("{:?} is not a registered verb", s.verb.id)));
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Validates a collection: every statement individually, plus id uniqueness.
/// Violation fields are prefixed with the statement's index.
pub fn validate_batch(stmts: &[Statement], reg: &VerbRegistry) -> Result<(), Vec<Violation>> {
    let per_item = crate::par::map_collect(stmts, |s| validate_statement(s, reg));
    let mut out = Vec::new();
    for (idx, res) in per_item.into_iter().enumerate() {
        if let Err(vs) = res {
            out.extend(vs.into_iter().map(|v| Violation::new(format!("[{idx}].{}", v.field), v.message)));
        }
    }
    let mut seen = HashSet::with_capacity(stmts.len());
    for (idx, s) in stmts.iter().enumerate() {
        if !seen.insert(s.id) {
            out.push(Violation::new(format!("[{idx}].id"), format!("duplicate id {}", s.id)));
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}
