//! Small hand-built statements used in docs and tests.

use chrono::{TimeZone, Utc};
use uuid::Uuid;

use super::model::{
    ActivityObject, Agent, CompetencyLevel, GranularityTier, Statement, StatementContext, StatementResult,
};
use super::registry::{verbs, VerbRegistry};
use super::activity_types;

fn verb(iri: &str) -> super::Verb {
    VerbRegistry::standard().verb(iri).expect("standard verb")
}

pub fn susan() -> Agent {
    Agent::mailbox("Susan", "susan@example.org")
}

pub fn susan_completed() -> Statement {
    Statement::new(
        Uuid::from_u128(0x5u128 << 64 | 1),
        susan(),
        verb(verbs::COMPLETED),
        ActivityObject::new("https://lms.example.org/course/dse", "Data Science Ethics", activity_types::COURSE)
            .with_competency(CompetencyLevel::Novice),
        Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap(),
        GranularityTier::Transactional,
    )
}

pub fn susan_asserted() -> Statement {
    Statement::new(
        Uuid::from_u128(0x5u128 << 64 | 2),
        susan(),
        verb(verbs::ASSERTED),
        ActivityObject::new("https://lms.example.org/course/dm", "DM course (A)", activity_types::COURSE),
        Utc.with_ymd_and_hms(2024, 5, 20, 9, 0, 0).unwrap(),
        GranularityTier::Authoritative,
    )
}

pub fn susan_viewed() -> Statement {
    Statement::new(
        Uuid::from_u128(0x5u128 << 64 | 3),
        susan(),
        verb(verbs::VIEWED),
        ActivityObject::new("https://lms.example.org/media/clip-7", "a video clip", activity_types::MEDIA),
        Utc.with_ymd_and_hms(2024, 4, 2, 15, 30, 0).unwrap(),
        GranularityTier::Noise,
    )
}

pub fn susan_passed_quiz() -> Statement {
    Statement::new(
        Uuid::from_u128(0x5u128 << 64 | 4),
        susan(),
        verb(verbs::PASSED),
        ActivityObject::new("https://lms.example.org/quiz/3", "Quiz 3", activity_types::ASSESSMENT),
        Utc.with_ymd_and_hms(2024, 4, 10, 8, 15, 30).unwrap(),
        GranularityTier::Transactional,
    )
    .with_result(StatementResult { success: true, score_scaled: Some(0.85), response: None })
    .with_context(StatementContext {
        course_id: "https://lms.example.org/course/dm".into(),
        session_id: "s-42".into(),
    })
}

/// The chatbot interaction: Admin User asking a data privacy question.
pub fn admin_asked() -> Statement {
    Statement::new(
        Uuid::from_u128(0xad_u128 << 64 | 1),
        Agent::account("Admin User", "https://moodle.example.org", "2"),
        verb(verbs::ASKED),
        ActivityObject::new(
            "urn:vita:question:6b1d",
            "How should we protect student data privacy in analytics?",
            activity_types::QUESTION,
        ),
        Utc.with_ymd_and_hms(2024, 11, 4, 14, 3, 27).unwrap(),
        GranularityTier::Noise,
    )
    .with_context(StatementContext {
        course_id: "https://moodle.example.org/course/12".into(),
        session_id: "chat-1".into(),
    })
}

/// Seeded generator of valid statements.
///
/// The default pools (20 learners, 30 activities, the registry's verbs, one
/// year from 2024-01-01) give plenty of collisions for filter tests.
/// [`StatementGen::wild`] instead draws fresh unicode text, optional fields,
/// vendor extensions and nanosecond timestamps for every statement.
#[derive(Debug, Clone)]
pub struct StatementGen {
    actors: Vec<Agent>,
    objects: Vec<ActivityObject>,
    verbs: Vec<(super::Verb, GranularityTier)>,
    start: chrono::DateTime<Utc>,
    span_secs: i64,
    wild: bool,
}

const ACTIVITY_TYPES: [&str; 6] = [
    activity_types::QUESTION,
    activity_types::COURSE,
    activity_types::MEDIA,
    activity_types::MEETING,
    activity_types::ASSESSMENT,
    activity_types::OBJECTIVE,
];

const TEXT_ALPHABET: &[char] = &[
    'a', 'b', 'z', 'A', 'Q', '0', '9', ' ', ' ', '"', '\\', '/', '\n', '\t', ',', '\'', 'é', 'ß', 'ø', 'Ж', 'λ', '中',
    '文', '😀', '\u{1f}', '\u{7f}', '\u{2028}', '<', '&', '{', '}', '[', ']',
];

fn text<R: rand::Rng>(rng: &mut R, min: usize, max: usize) -> String {
    let len = rng.gen_range(min..=max);
    let mut s: String = (0..len).map(|_| TEXT_ALPHABET[rng.gen_range(0..TEXT_ALPHABET.len())]).collect();
    if s.trim().is_empty() {
        s.push('x');
    }
    s
}

impl StatementGen {
    pub fn new(reg: &VerbRegistry) -> Self {
        let actors = (0..20)
            .map(|i| {
                if i % 2 == 0 {
                    Agent::mailbox(format!("Learner {i}"), &format!("learner{i}@example.org"))
                } else {
                    Agent::account(format!("Learner {i}"), "https://lms.example.org", format!("u{i}"))
                }
            })
            .collect();
        let objects = (0..30)
            .map(|i| {
                ActivityObject::new(
                    format!("https://lms.example.org/activity/{i}"),
                    format!("Activity {i}"),
                    ACTIVITY_TYPES[i % ACTIVITY_TYPES.len()],
                )
            })
            .collect();
        let verbs = reg.iter().map(|(iri, e)| (super::Verb::new(iri, e.display.clone()), e.min_tier)).collect();
        StatementGen {
            actors,
            objects,
            verbs,
            start: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
            span_secs: 365 * 24 * 3600,
            wild: false,
        }
    }

    pub fn wild(mut self) -> Self {
        self.wild = true;
        self.start = Utc.with_ymd_and_hms(1990, 1, 1, 0, 0, 0).unwrap();
        self.span_secs = 60 * 365 * 24 * 3600;
        self
    }

    pub fn actors(&self) -> &[Agent] {
        &self.actors
    }

    pub fn statement<R: rand::Rng>(&self, rng: &mut R) -> Statement {
        let (verb, tier) = self.verbs[rng.gen_range(0..self.verbs.len())].clone();
        let mut ts = self.start + chrono::Duration::seconds(rng.gen_range(0..self.span_secs));
        let id = Uuid::from_u128(rng.gen());
        if !self.wild {
            let actor = self.actors[rng.gen_range(0..self.actors.len())].clone();
            let object = self.objects[rng.gen_range(0..self.objects.len())].clone();
            let mut s = Statement::new(id, actor, verb, object, ts, tier);
            if rng.gen_bool(0.3) {
                s.result = Some(StatementResult {
                    success: rng.gen(),
                    score_scaled: Some(rng.gen_range(0..=100) as f64 / 100.0),
                    response: None,
                });
            }
            return s;
        }
        ts += chrono::Duration::nanoseconds(match rng.gen_range(0..3) {
            0 => 0,
            1 => rng.gen_range(0..1000) * 1_000_000,
            _ => rng.gen_range(0..1_000_000_000),
        });
        let actor = if rng.gen() {
            Agent::mailbox(text(rng, 1, 12), &format!("u{}@ex-{}.org", rng.gen::<u32>(), rng.gen_range(0..9)))
        } else {
            Agent::account(text(rng, 1, 12), "https://sso.example.org/home", text(rng, 1, 8))
        };
        let mut object = ActivityObject::new(
            format!("urn:vita:act:{}", rng.gen::<u64>()),
            text(rng, 1, 30),
            ACTIVITY_TYPES[rng.gen_range(0..ACTIVITY_TYPES.len())],
        );
        if rng.gen_bool(0.3) {
            object.competency_level =
                Some([CompetencyLevel::Novice, CompetencyLevel::Intermediate, CompetencyLevel::Expert][rng.gen_range(0..3)]);
        }
        let mut s = Statement::new(id, actor, verb, object, ts, tier);
        if rng.gen() {
            let score = match rng.gen_range(0..4) {
                0 => None,
                1 => Some(if rng.gen() { 0.0 } else { 1.0 }),
                _ => Some(rng.gen::<f64>()),
            };
            let response = rng.gen::<bool>().then(|| if rng.gen_bool(0.2) { String::new() } else { text(rng, 0, 60) });
            s.result = Some(StatementResult { success: rng.gen(), score_scaled: score, response });
        }
        if rng.gen() {
            s.context = Some(StatementContext {
                course_id: format!("https://lms.example.org/course/{}", rng.gen_range(0..50)),
                session_id: if rng.gen() { String::new() } else { text(rng, 1, 10) },
            });
        }
        for _ in 0..rng.gen_range(0..3) {
            let key = format!("x-{}", text(rng, 1, 6));
            let value = match rng.gen_range(0..4) {
                0 => serde_json::Value::Null,
                1 => serde_json::Value::from(rng.gen::<i64>()),
                2 => serde_json::Value::from(text(rng, 0, 10)),
                _ => serde_json::json!({"k": [rng.gen::<bool>(), rng.gen::<u32>()], "s": text(rng, 0, 4)}),
            };
            s.extensions.insert(key, value);
        }
        s
    }
}
