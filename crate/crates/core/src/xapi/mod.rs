//! Typed xAPI statements: model, verb vocabulary, validation, canonical JSON
//! and sentence rendering.

mod codec;
pub mod fixtures;
mod model;
mod registry;
mod validate;

pub use codec::{
    format_timestamp, parse_statement, parse_timestamp, serialize_statement, statement_from_value, ParseError,
    SerializeError, RESERVED_KEYS,
};
pub use model::{
    render_sentence, Account, ActivityObject, Agent, CompetencyLevel, GranularityTier, IdSource, RandomIds,
    SequentialIds, Statement, StatementContext, StatementResult, Verb,
};
pub use registry::{verbs, RegistryError, VerbEntry, VerbRegistry};
pub use validate::{is_iri, is_mailto, validate_batch, validate_statement, validate_structure, Violation};

/// Activity type IRIs used by the built-in producers.
pub mod activity_types {
    pub const QUESTION: &str = "http://adlnet.gov/expapi/activities/question";
    pub const COURSE: &str = "http://adlnet.gov/expapi/activities/course";
    pub const MEDIA: &str = "http://adlnet.gov/expapi/activities/media";
    pub const MEETING: &str = "http://adlnet.gov/expapi/activities/meeting";
    pub const ASSESSMENT: &str = "http://adlnet.gov/expapi/activities/assessment";
    pub const OBJECTIVE: &str = "http://adlnet.gov/expapi/activities/objective";
}
