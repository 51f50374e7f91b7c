//! Synthetic desk-scale data: a seeded course cohort and a seeded chat log.
//!
//! The cohort is 50 learners over a 10-week term starting Monday 2025-01-06.
//! Each learner draws a skill level in `[0.2, 0.95)` and an engagement level in
//! `[0.05, 1.0)`. Per week a learner views 0 to 6 media items (scaled by
//! engagement), attends the live session with probability = engagement, and
//! takes the weekly quiz with probability `0.3 + 0.7 * engagement`, passing
//! with probability = skill. Everyone registers for the course in week 1.
//! Everything derives from one ChaCha8 seed, ids included.

use chrono::{DateTime, Duration, NaiveDate, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use uuid::Uuid;

use crate::analytics::Term;
use crate::ingest::LMS_HOME_PAGE;
use crate::xapi::{activity_types, verbs, ActivityObject, Agent, Statement, StatementContext, StatementResult, VerbRegistry};

pub const DEMO_SEED: u64 = 20_250_106;
pub const DEMO_LEARNERS: usize = 50;
pub const DEMO_WEEKS: u32 = 10;
pub const DEMO_COURSE: &str = "https://lms.vita.local/course/ds-ethics";

const DEMO_NAMESPACE: Uuid = Uuid::from_u128(0x93c4_0a5e_7b21_5f6d_a0e8_1c37_4d92_b6f1);

const FIRST_NAMES: [&str; 10] = ["Ana", "Ben", "Chen", "Dara", "Eli", "Fatima", "Goran", "Hana", "Ivo", "Jun"];
const LAST_NAMES: [&str; 5] = ["Okafor", "Silva", "Novak", "Park", "Haddad"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DemoConfig {
    pub seed: u64,
    pub learners: usize,
    pub weeks: u32,
    pub term_start: NaiveDate,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            seed: DEMO_SEED,
            learners: DEMO_LEARNERS,
            weeks: DEMO_WEEKS,
            term_start: NaiveDate::from_ymd_opt(2025, 1, 6).expect("valid date"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoCohort {
    pub term: Term,
    pub roster: Vec<Agent>,
    /// Sorted by (timestamp, id).
    pub statements: Vec<Statement>,
}

pub fn demo_learner(i: usize) -> Agent {
    let name = format!("{} {}", FIRST_NAMES[i % FIRST_NAMES.len()], LAST_NAMES[(i / FIRST_NAMES.len()) % LAST_NAMES.len()]);
    Agent::account(name, LMS_HOME_PAGE, format!("learner{:02}", i + 1))
}

struct Emitter<'a> {
    reg: &'a VerbRegistry,
    seed: u64,
    n: u64,
    out: Vec<Statement>,
}

impl Emitter<'_> {
    fn emit(&mut self, actor: &Agent, verb: &str, object: ActivityObject, at: DateTime<Utc>, result: Option<StatementResult>) {
        let v = self.reg.verb(verb).expect("demo verbs are registered");
        let tier = self.reg.min_tier(verb).expect("demo verbs are registered");
        let id = Uuid::new_v5(&DEMO_NAMESPACE, format!("{}:{}", self.seed, self.n).as_bytes());
        self.n += 1;
        let mut s = Statement::new(id, actor.clone(), v, object, at, tier)
            .with_context(StatementContext { course_id: DEMO_COURSE.into(), session_id: String::new() });
        if let Some(r) = result {
            s = s.with_result(r);
        }
        self.out.push(s);
    }
}

fn instant_in_week(rng: &mut ChaCha8Rng, term: &Term, week: u32) -> DateTime<Utc> {
    let secs = rng.gen_range(0..7 * 24 * 3600);
    term.start_instant() + Duration::weeks(week as i64 - 1) + Duration::seconds(secs)
}

pub fn generate_cohort(cfg: &DemoConfig, reg: &VerbRegistry) -> DemoCohort {
    let term = Term::new(cfg.term_start, cfg.weeks.max(1)).expect("weeks >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let roster: Vec<Agent> = (0..cfg.learners).map(demo_learner).collect();
    let mut em = Emitter { reg, seed: cfg.seed, n: 0, out: Vec::new() };
    let course = ActivityObject::new(DEMO_COURSE, "Data Science Ethics", activity_types::COURSE);

    for learner in &roster {
        let skill: f64 = rng.gen_range(0.2..0.95);
        let engagement: f64 = rng.gen_range(0.05..1.0);
        let reg_at = term.start_instant() + Duration::minutes(rng.gen_range(0..24 * 60));
        em.emit(learner, verbs::REGISTERED, course.clone(), reg_at, None);
        for week in 1..=term.weeks {
            let views = (rng.gen_range(0.0..7.0) * engagement).floor() as u32;
            for k in 0..views {
                let video = ActivityObject::new(
                    format!("{DEMO_COURSE}/video/w{week}-{k}"),
                    format!("Week {week} clip {}", k + 1),
                    activity_types::MEDIA,
                );
                let at = instant_in_week(&mut rng, &term, week);
                em.emit(learner, verbs::VIEWED, video, at, None);
            }
            if rng.gen_bool(engagement) {
                let meeting = ActivityObject::new(
                    format!("{DEMO_COURSE}/meeting/w{week}"),
                    format!("Week {week} live session"),
                    activity_types::MEETING,
                );
                let at = instant_in_week(&mut rng, &term, week);
                em.emit(learner, verbs::ATTENDED, meeting, at, None);
            }
            if rng.gen_bool(0.3 + 0.7 * engagement) {
                let quiz = ActivityObject::new(
                    format!("{DEMO_COURSE}/quiz/w{week}"),
                    format!("Week {week} quiz"),
                    activity_types::ASSESSMENT,
                );
                let passed = rng.gen_bool(skill);
                // Quantised to tenths so scores survive any text round trip.
                let score = if passed { rng.gen_range(6..=10) } else { rng.gen_range(0..6) } as f64 / 10.0;
                let at = instant_in_week(&mut rng, &term, week);
                let verb = if passed { verbs::PASSED } else { verbs::FAILED };
                let result = StatementResult { success: passed, score_scaled: Some(score), response: None };
                em.emit(learner, verb, quiz, at, Some(result));
            }
        }
    }
    let mut statements = em.out;
    statements.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.id.cmp(&b.id)));
    DemoCohort { term, roster, statements }
}

const QUESTION_STEMS: [&str; 8] = [
    "What is the difference between anonymisation and pseudonymisation?",
    "How should we protect student data privacy in analytics?",
    "Why does informed consent matter for web-scraped data?",
    "Can you explain p-hacking with an example?",
    "When is it acceptable to drop outliers from a dataset?",
    "How do I report a conflict of interest in a study?",
    "What does a confidentiality agreement cover?",
    "How can bias enter a training dataset?",
];

/// A chat-log export in the versioned envelope format with `entries` records,
/// one minute apart, spread across the demo roster.
pub fn demo_chat_log(entries: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2025, 1, 6).expect("valid date").and_hms_opt(8, 0, 0).expect("valid time").and_utc();
    let items: Vec<_> = (0..entries)
        .map(|i| {
            let learner = rng.gen_range(0..DEMO_LEARNERS);
            let stem = QUESTION_STEMS[rng.gen_range(0..QUESTION_STEMS.len())];
            let agent = demo_learner(learner);
            json!({
                "user": agent.display_name,
                "userid": format!("learner{:02}", learner + 1),
                "message": format!("{stem} (thread {i})"),
                "response": format!("Here is a short answer to thread {i}. Start from the lesson notes and ask a follow-up if needed."),
                "time": crate::xapi::format_timestamp(&(start + Duration::minutes(i as i64))),
                "courseid": "ds-ethics",
                "sessionid": format!("chat-{}", i / 20),
            })
        })
        .collect();
    serde_json::to_string_pretty(&json!({"version": 1, "entries": items})).expect("serialisable")
}
