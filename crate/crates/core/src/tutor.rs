//! Prompt templates, course-context embedding, scripted Socratic dialogue and
//! integrity tagging for the AI tutor, plus the LLM client abstraction.
//!
//! # File formats
//!
//! Template catalog: a JSON array of
//! `{"id", "scenario", "template", "slots"?}`. Slots are bracketed
//! placeholders such as `[Topic/Article]`. A placeholder binds under its first
//! `/`-separated alternative (`Topic`), any other alternative, or the full
//! placeholder text. `slots` optionally maps a placeholder to a shorter name,
//! e.g. `{"Theory or Method": "Method"}`.
//!
//! Socratic script: `{"topic", "steps": [{"question", "follow_up"}], "reflection"?}`.
//!
//! # Context preamble
//!
//! With a [`CourseContext`], the instruction is prefixed by, in order:
//!
//! ```text
//! Course: <course id>
//! Lesson objectives:
//! - <objective>
//! Key vocabulary:
//! - <term>
//! Source of truth:
//! Q: <pattern>
//! A: <answer>
//! Instruction:
//! <instruction>
//! ```
//!
//! Empty sections are left out. A source-of-truth entry is included when its
//! pattern occurs in the instruction, ignoring case.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ingest::{transform_record_as, ChatLogRecord, TransformError};
use crate::xapi::{Agent, Statement, VerbRegistry};

pub const QA_TEMPERATURE: f32 = 0.2;
pub const ROLE_PLAY_TEMPERATURE: f32 = 0.7;
pub const DEFAULT_MAX_TOKENS: u32 = 512;

pub const DEFAULT_REFLECTION: &str =
    "What is one ethical principle you struggled to understand before this session, and how has your understanding changed?";
pub const NUDGE: &str = "Take your time. Even a partial thought is a good place to start.";
pub const CLOSING: &str = "Thank you for reflecting. This dialogue is complete.";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TutorError {
    #[error("template {id}: {reason}")]
    Template { id: String, reason: String },
    #[error("slot {0:?} is not bound")]
    UnboundSlot(String),
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("course context: {0}")]
    Context(String),
    #[error("socratic script: {0}")]
    Script(String),
    #[error("session is not in Socratic mode")]
    NotSocratic,
    #[error("Socratic dialogue already complete")]
    DialogueComplete,
    #[error("message is empty")]
    EmptyMessage,
    #[error("transcript is empty; nothing to grade")]
    EmptyTranscript,
    #[error("LLM client failed: {0}")]
    Client(LlmError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("catalog: {0}")]
    Catalog(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    Summarization,
    Explanation,
    Comparison,
    CriticalAnalysis,
    RolePlaying,
    ProblemSolving,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Summarization,
        Scenario::Explanation,
        Scenario::Comparison,
        Scenario::CriticalAnalysis,
        Scenario::RolePlaying,
        Scenario::ProblemSolving,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Slot {
    /// Text between the brackets.
    pub placeholder: String,
    pub name: String,
    /// Accepted binding keys, `name` first.
    pub aliases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: String,
    pub scenario: Scenario,
    pub template: String,
    slots: Vec<Slot>,
    segments: Vec<Segment>,
}

impl PromptTemplate {
    pub fn new(
        id: impl Into<String>,
        scenario: Scenario,
        template: impl Into<String>,
        names: &BTreeMap<String, String>,
    ) -> Result<Self, TutorError> {
        let id = id.into();
        let template = template.into();
        let err = |reason: String| TutorError::Template { id: id.clone(), reason };
        let mut slots: Vec<Slot> = Vec::new();
        let mut segments = Vec::new();
        let mut rest = template.as_str();
        while let Some(open) = rest.find(['[', ']']) {
            if rest.as_bytes()[open] == b']' {
                return Err(err(format!("unmatched ']' in {template:?}")));
            }
            let close = rest[open + 1..]
                .find(['[', ']'])
                .filter(|i| rest.as_bytes()[open + 1 + i] == b']')
                .ok_or_else(|| err(format!("unclosed '[' in {template:?}")))?;
            let placeholder = rest[open + 1..open + 1 + close].trim();
            if placeholder.is_empty() {
                return Err(err("empty placeholder".into()));
            }
            if open > 0 {
                segments.push(Segment::Text(rest[..open].to_string()));
            }
            let idx = match slots.iter().position(|s| s.placeholder == placeholder) {
                Some(i) => i,
                None => {
                    slots.push(slot_for(placeholder, names.get(placeholder)));
                    slots.len() - 1
                }
            };
            segments.push(Segment::Slot(idx));
            rest = &rest[open + close + 2..];
        }
        if !rest.is_empty() {
            segments.push(Segment::Text(rest.to_string()));
        }
        if let Some(unused) = names.keys().find(|k| !slots.iter().any(|s| &s.placeholder == *k)) {
            return Err(err(format!("slot name given for absent placeholder [{unused}]")));
        }
        Ok(PromptTemplate { id, scenario, template, slots, segments })
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }
}

fn slot_for(placeholder: &str, explicit: Option<&String>) -> Slot {
    let mut aliases: Vec<String> = Vec::new();
    let mut add = |a: &str| {
        let a = a.trim();
        if !a.is_empty() && !aliases.iter().any(|x| x == a) {
            aliases.push(a.to_string());
        }
    };
    if let Some(name) = explicit {
        add(name);
    }
    placeholder.split('/').for_each(&mut add);
    add(placeholder);
    Slot { placeholder: placeholder.to_string(), name: aliases[0].clone(), aliases }
}

#[derive(Deserialize)]
struct TemplateDef {
    id: String,
    scenario: Scenario,
    template: String,
    #[serde(default)]
    slots: BTreeMap<String, String>,
}

/// Templates keyed by id. Later definitions with an existing id replace it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateCatalog {
    templates: BTreeMap<String, PromptTemplate>,
}

impl TemplateCatalog {
    /// The six built-in scenario templates.
    pub fn seed() -> Self {
        let mut c = TemplateCatalog::default();
        c.merge_json(include_str!("../data/templates.json")).expect("bundled templates are valid");
        c
    }

    pub fn merge_json(&mut self, text: &str) -> Result<(), TutorError> {
        let defs: Vec<TemplateDef> = serde_json::from_str(text).map_err(|e| TutorError::Catalog(e.to_string()))?;
        let mut parsed = Vec::with_capacity(defs.len());
        for d in defs {
            parsed.push(PromptTemplate::new(d.id, d.scenario, d.template, &d.slots)?);
        }
        for t in parsed {
            self.templates.insert(t.id.clone(), t);
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&PromptTemplate, TutorError> {
        self.templates.get(id).ok_or_else(|| TutorError::UnknownTemplate(id.to_string()))
    }

    pub fn for_scenario(&self, scenario: Scenario) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.values().filter(move |t| t.scenario == scenario)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.values()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceOfTruth {
    pub pattern: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CourseContext {
    pub course_id: String,
    #[serde(default)]
    pub objectives: Vec<String>,
    #[serde(default)]
    pub vocabulary: Vec<String>,
    #[serde(default)]
    pub source_of_truth: Vec<SourceOfTruth>,
}

impl CourseContext {
    pub fn validate(&self) -> Result<(), TutorError> {
        let mut seen = BTreeSet::new();
        for e in &self.source_of_truth {
            let p = e.pattern.trim().to_lowercase();
            if p.is_empty() {
                return Err(TutorError::Context("empty source-of-truth pattern".into()));
            }
            if !seen.insert(p) {
                return Err(TutorError::Context(format!("duplicate source-of-truth pattern {:?}", e.pattern)));
            }
        }
        Ok(())
    }

    pub fn matches<'a>(&'a self, text: &str) -> impl Iterator<Item = &'a SourceOfTruth> {
        let hay = text.to_lowercase();
        self.source_of_truth.iter().filter(move |e| hay.contains(&e.pattern.trim().to_lowercase()))
    }
}

/// Prefixes `instruction` with the context preamble described in the module docs.
pub fn embed_context(ctx: &CourseContext, instruction: &str) -> String {
    let mut out = format!("Course: {}\n", ctx.course_id);
    if !ctx.objectives.is_empty() {
        out.push_str("Lesson objectives:\n");
        for o in &ctx.objectives {
            out.push_str(&format!("- {o}\n"));
        }
    }
    if !ctx.vocabulary.is_empty() {
        out.push_str("Key vocabulary:\n");
        for v in &ctx.vocabulary {
            out.push_str(&format!("- {v}\n"));
        }
    }
    let mut matched = ctx.matches(instruction).peekable();
    if matched.peek().is_some() {
        out.push_str("Source of truth:\n");
        for e in matched {
            out.push_str(&format!("Q: {}\nA: {}\n", e.pattern, e.answer));
        }
    }
    out.push_str("Instruction:\n");
    out.push_str(instruction);
    out
}

/// Substitutes every slot. Values are inserted verbatim and never re-scanned.
pub fn render_prompt(
    t: &PromptTemplate,
    slots: &BTreeMap<String, String>,
    ctx: Option<&CourseContext>,
) -> Result<String, TutorError> {
    let mut values = Vec::with_capacity(t.slots.len());
    for slot in &t.slots {
        let v = slot
            .aliases
            .iter()
            .find_map(|a| slots.get(a))
            .filter(|v| !v.trim().is_empty())
            .ok_or_else(|| TutorError::UnboundSlot(slot.name.clone()))?;
        values.push(v.as_str());
    }
    let mut out = String::with_capacity(t.template.len());
    for seg in &t.segments {
        match seg {
            Segment::Text(s) => out.push_str(s),
            Segment::Slot(i) => out.push_str(values[*i]),
        }
    }
    Ok(match ctx {
        Some(ctx) => embed_context(ctx, &out),
        None => out,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocraticStep {
    pub question: String,
    pub follow_up: String,
}

fn default_reflection() -> String {
    DEFAULT_REFLECTION.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocraticScript {
    pub topic: String,
    pub steps: Vec<SocraticStep>,
    #[serde(default = "default_reflection")]
    pub reflection: String,
}

impl SocraticScript {
    pub fn validate(&self) -> Result<(), TutorError> {
        if self.steps.is_empty() {
            return Err(TutorError::Script("no steps".into()));
        }
        for (i, s) in self.steps.iter().enumerate() {
            if s.question.trim().is_empty() || s.follow_up.trim().is_empty() {
                return Err(TutorError::Script(format!("step {i} needs both a question and a follow-up")));
            }
        }
        if self.reflection.trim().is_empty() {
            return Err(TutorError::Script("empty reflection prompt".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, TutorError> {
        let s: SocraticScript = serde_json::from_str(text).map_err(|e| TutorError::Script(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Two-step script on informed consent and confidentiality.
    pub fn consent() -> Self {
        Self::from_json(include_str!("../data/socratic_consent.json")).expect("bundled script is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Awaiting {
    Answer,
    FollowUpAnswer,
    Reflection,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum DialogueMode {
    FreeChat,
    Socratic { script: SocraticScript, step: usize, awaiting: Awaiting },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    Learner,
    Tutor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub at: DateTime<Utc>,
    pub speaker: Speaker,
    pub text: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueSession {
    pub id: String,
    pub learner: Agent,
    pub course_id: String,
    pub context: Option<CourseContext>,
    pub scenario: Option<Scenario>,
    pub mode: DialogueMode,
    pub transcript: Vec<Turn>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnOutcome {
    pub reply: String,
    pub emitted: Vec<Statement>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocraticOutcome {
    pub utterance: String,
    pub step: usize,
    pub awaiting: Awaiting,
    pub emitted: Vec<Statement>,
}

impl DialogueSession {
    pub fn new(id: impl Into<String>, learner: Agent, course_id: impl Into<String>) -> Self {
        DialogueSession {
            id: id.into(),
            learner,
            course_id: course_id.into(),
            context: None,
            scenario: None,
            mode: DialogueMode::FreeChat,
            transcript: Vec::new(),
        }
    }

    pub fn with_context(mut self, ctx: CourseContext) -> Result<Self, TutorError> {
        ctx.validate()?;
        self.context = Some(ctx);
        Ok(self)
    }

    pub fn with_scenario(mut self, scenario: Scenario) -> Self {
        self.scenario = Some(scenario);
        self
    }

    /// Appends a turn, nudging its time forward so the transcript stays
    /// strictly increasing. Returns the recorded time.
    fn push(&mut self, at: DateTime<Utc>, speaker: Speaker, text: String, failed: bool) -> DateTime<Utc> {
        let at = match self.transcript.last() {
            Some(last) if at <= last.at => last.at + Duration::microseconds(1),
            _ => at,
        };
        self.transcript.push(Turn { at, speaker, text, failed });
        at
    }

    /// The prompt sent to the client for a free-chat message.
    pub fn compose_prompt(&self, user_message: &str) -> String {
        match &self.context {
            Some(ctx) => embed_context(ctx, user_message),
            None => user_message.to_string(),
        }
    }

    pub fn params(&self) -> LlmParams {
        LlmParams::for_scenario(self.scenario)
    }

    fn record(&self, query: &str, response: &str, at: DateTime<Utc>) -> ChatLogRecord {
        ChatLogRecord {
            user_name: self.learner.display_name.clone(),
            user_id: self.learner.key().unwrap_or_default(),
            query_text: query.to_string(),
            response_text: response.to_string(),
            timestamp: at,
            course_id: self.course_id.clone(),
            session_id: self.id.clone(),
        }
    }

    /// One free-chat exchange. On client failure the transcript gains a failed
    /// marker and nothing is emitted.
    pub fn run_turn(
        &mut self,
        user_message: &str,
        client: &dyn LlmClient,
        reg: &VerbRegistry,
        at: DateTime<Utc>,
    ) -> Result<TurnOutcome, TutorError> {
        if user_message.trim().is_empty() {
            return Err(TutorError::EmptyMessage);
        }
        let prompt = self.compose_prompt(user_message);
        let asked_at = self.push(at, Speaker::Learner, user_message.to_string(), false);
        let result = client
            .send(&prompt, &self.params())
            .map_err(TutorError::Client)
            .and_then(|reply| {
                let pair = transform_record_as(&self.record(user_message, &reply, asked_at), self.learner.clone(), reg)?;
                Ok((reply, pair))
            });
        match result {
            Ok((reply, pair)) => {
                self.push(asked_at, Speaker::Tutor, reply.clone(), false);
                Ok(TurnOutcome { reply, emitted: pair.into() })
            }
            Err(e) => {
                self.push(asked_at, Speaker::Tutor, format!("turn failed: {e}"), true);
                Err(e)
            }
        }
    }

    /// Switches to Socratic mode and asks the first question.
    pub fn start_socratic(&mut self, script: SocraticScript, at: DateTime<Utc>) -> Result<String, TutorError> {
        script.validate()?;
        let first = script.steps[0].question.clone();
        self.mode = DialogueMode::Socratic { script, step: 0, awaiting: Awaiting::Answer };
        self.push(at, Speaker::Tutor, first.clone(), false);
        Ok(first)
    }

    pub fn socratic_state(&self) -> Option<(usize, Awaiting)> {
        match &self.mode {
            DialogueMode::Socratic { step, awaiting, .. } => Some((*step, *awaiting)),
            DialogueMode::FreeChat => None,
        }
    }

    /// What the tutor is currently waiting on an answer to.
    pub fn current_utterance(&self) -> Option<&str> {
        let DialogueMode::Socratic { script, step, awaiting } = &self.mode else {
            return None;
        };
        Some(match awaiting {
            Awaiting::Answer => &script.steps[*step].question,
            Awaiting::FollowUpAnswer => &script.steps[*step].follow_up,
            Awaiting::Reflection => &script.reflection,
            Awaiting::Complete => CLOSING,
        })
    }

    /// Records the learner's answer and moves the script on, whatever the
    /// answer says. A blank answer re-asks with a nudge and leaves the state alone.
    pub fn advance_socratic(
        &mut self,
        answer: &str,
        reg: &VerbRegistry,
        at: DateTime<Utc>,
    ) -> Result<SocraticOutcome, TutorError> {
        let DialogueMode::Socratic { script, step, awaiting } = &self.mode else {
            return Err(TutorError::NotSocratic);
        };
        let (mut step, mut awaiting) = (*step, *awaiting);
        if awaiting == Awaiting::Complete {
            return Err(TutorError::DialogueComplete);
        }
        if answer.trim().is_empty() {
            let utterance = format!("{NUDGE} {}", self.current_utterance().unwrap_or_default());
            self.push(at, Speaker::Tutor, utterance.clone(), false);
            return Ok(SocraticOutcome { utterance, step, awaiting, emitted: Vec::new() });
        }
        let utterance = match awaiting {
            Awaiting::Answer => {
                awaiting = Awaiting::FollowUpAnswer;
                script.steps[step].follow_up.clone()
            }
            Awaiting::FollowUpAnswer if step + 1 < script.steps.len() => {
                step += 1;
                awaiting = Awaiting::Answer;
                script.steps[step].question.clone()
            }
            Awaiting::FollowUpAnswer => {
                awaiting = Awaiting::Reflection;
                script.reflection.clone()
            }
            Awaiting::Reflection | Awaiting::Complete => {
                awaiting = Awaiting::Complete;
                CLOSING.to_string()
            }
        };
        let answered_at = self.push(at, Speaker::Learner, answer.to_string(), false);
        let pair = transform_record_as(&self.record(answer, &utterance, answered_at), self.learner.clone(), reg)?;
        self.push(answered_at, Speaker::Tutor, utterance.clone(), false);
        if let DialogueMode::Socratic { step: s, awaiting: a, .. } = &mut self.mode {
            *s = step;
            *a = awaiting;
        }
        Ok(SocraticOutcome { utterance, step, awaiting, emitted: pair.into() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LlmParams {
    pub max_tokens: u32,
    pub temperature: f32,
}

impl LlmParams {
    pub fn for_scenario(scenario: Option<Scenario>) -> Self {
        let temperature = match scenario {
            Some(Scenario::RolePlaying) => ROLE_PLAY_TEMPERATURE,
            _ => QA_TEMPERATURE,
        };
        LlmParams { max_tokens: DEFAULT_MAX_TOKENS, temperature }
    }
}

impl Default for LlmParams {
    fn default() -> Self {
        Self::for_scenario(None)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("endpoint returned {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
}

pub trait LlmClient: Send + Sync {
    fn describe(&self) -> String;
    fn send(&self, prompt: &str, params: &LlmParams) -> Result<String, LlmError>;
}

/// Deterministic stand-in: the first rule whose pattern occurs in the prompt
/// supplies the reply, otherwise the reply is derived from a digest of the
/// prompt and parameters.
#[derive(Debug, Clone, Default)]
pub struct ScriptedMock {
    rules: Vec<(String, String)>,
}

impl ScriptedMock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_rule(mut self, contains: impl Into<String>, reply: impl Into<String>) -> Self {
        self.rules.push((contains.into(), reply.into()));
        self
    }
}

impl LlmClient for ScriptedMock {
    fn describe(&self) -> String {
        "scripted mock".into()
    }

    fn send(&self, prompt: &str, params: &LlmParams) -> Result<String, LlmError> {
        if let Some((_, reply)) = self.rules.iter().find(|(p, _)| prompt.contains(p.as_str())) {
            return Ok(reply.clone());
        }
        let mut h = Sha256::new();
        h.update(prompt.as_bytes());
        h.update(params.max_tokens.to_be_bytes());
        h.update(params.temperature.to_bits().to_be_bytes());
        let digest = hex::encode(&h.finalize()[..6]);
        Ok(format!("Let's reason about this together. What do you already know that could help? (mock {digest})"))
    }
}

/// Always fails; for exercising failure paths.
#[derive(Debug, Clone)]
pub struct FailingClient(pub String);

impl LlmClient for FailingClient {
    fn describe(&self) -> String {
        "failing client".into()
    }

    fn send(&self, _prompt: &str, _params: &LlmParams) -> Result<String, LlmError> {
        Err(LlmError::Transport(self.0.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Grade {
    Scored { score: f64, rationale: String },
    /// Needs instructor review; no score is invented.
    Indeterminate { reason: String, rationale: String },
}

impl Grade {
    pub fn score(&self) -> Option<f64> {
        match self {
            Grade::Scored { score, .. } => Some(*score),
            Grade::Indeterminate { .. } => None,
        }
    }
}

pub fn grading_prompt(transcript: &[Turn], rubric: &str) -> String {
    let mut p = String::from(
        "Grade the learner's reasoning in the Socratic dialogue below against the rubric. \
         Explain briefly, then end with a final line of the form `score: <decimal between 0 and 1>`.\n\nRubric:\n",
    );
    p.push_str(rubric);
    p.push_str("\n\nTranscript:\n");
    for t in transcript.iter().filter(|t| !t.failed) {
        let who = match t.speaker {
            Speaker::Learner => "Learner",
            Speaker::Tutor => "Tutor",
        };
        p.push_str(&format!("{who}: {}\n", t.text));
    }
    p
}

/// Reads `score: <decimal>` from the last non-blank line of a grading reply.
pub fn parse_score_line(reply: &str) -> Option<f64> {
    let last = reply.lines().rev().find(|l| !l.trim().is_empty())?;
    let last = last.trim().trim_matches('`');
    let (label, value) = last.split_once(':')?;
    if !label.trim().eq_ignore_ascii_case("score") {
        return None;
    }
    let v: f64 = value.trim().parse().ok()?;
    (v.is_finite() && (0.0..=1.0).contains(&v)).then_some(v)
}

pub fn grade_socratic_transcript(
    transcript: &[Turn],
    rubric: &str,
    client: &dyn LlmClient,
) -> Result<Grade, TutorError> {
    if transcript.iter().all(|t| t.failed) {
        return Err(TutorError::EmptyTranscript);
    }
    let params = LlmParams { max_tokens: DEFAULT_MAX_TOKENS, temperature: QA_TEMPERATURE };
    Ok(match client.send(&grading_prompt(transcript, rubric), &params) {
        Ok(reply) => match parse_score_line(&reply) {
            Some(score) => Grade::Scored { score, rationale: reply },
            None => Grade::Indeterminate { reason: "no parseable score line".into(), rationale: reply },
        },
        Err(e) => Grade::Indeterminate { reason: format!("client failure: {e}"), rationale: String::new() },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IntegrityQueryClass {
    SelfReferential,
    InformationStarved,
    TemporallyBased,
    SocraticDialogue,
}

impl IntegrityQueryClass {
    pub const ALL: [IntegrityQueryClass; 4] = [
        IntegrityQueryClass::SelfReferential,
        IntegrityQueryClass::InformationStarved,
        IntegrityQueryClass::TemporallyBased,
        IntegrityQueryClass::SocraticDialogue,
    ];
}

impl fmt::Display for IntegrityQueryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessmentItem {
    pub id: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrity_class: Option<IntegrityQueryClass>,
}

/// Sets the item's single integrity class, replacing any earlier tag.
pub fn tag_assessment(mut item: AssessmentItem, cls: IntegrityQueryClass) -> AssessmentItem {
    item.integrity_class = Some(cls);
    item
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IntegrityCoverage {
    pub per_class: BTreeMap<IntegrityQueryClass, usize>,
    pub untagged: usize,
}

impl IntegrityCoverage {
    pub fn missing_classes(&self) -> Vec<IntegrityQueryClass> {
        IntegrityQueryClass::ALL.into_iter().filter(|c| !self.per_class.contains_key(c)).collect()
    }
}

pub fn integrity_coverage(items: &[AssessmentItem]) -> IntegrityCoverage {
    let mut cov = IntegrityCoverage::default();
    for item in items {
        match item.integrity_class {
            Some(c) => *cov.per_class.entry(c).or_default() += 1,
            None => cov.untagged += 1,
        }
    }
    cov
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn at(s: i64) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 3, 3, 10, 0, 0).unwrap() + Duration::seconds(s)
    }

    fn bind(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    fn session() -> DialogueSession {
        DialogueSession::new("s-1", Agent::account("Ravi", crate::ingest::LMS_HOME_PAGE, "ravi"), "https://lms.vita.local/course/ds-ethics")
    }

    fn ctx() -> CourseContext {
        CourseContext {
            course_id: "https://lms.vita.local/course/ds-ethics".into(),
            objectives: vec!["Explain informed consent".into()],
            vocabulary: vec!["anonymisation".into()],
            source_of_truth: vec![SourceOfTruth { pattern: "data privacy".into(), answer: "See lesson 1 notes.".into() }],
        }
    }

    #[test]
    fn summarization_renders() {
        let cat = TemplateCatalog::seed();
        let t = cat.get("summarization").unwrap();
        let out = render_prompt(t, &bind(&[("Topic", "Data Privacy")]), None).unwrap();
        assert_eq!(out, "Summarizing the key points of Data Privacy in a concise paragraph.");
        let alt = render_prompt(t, &bind(&[("Article", "Data Privacy")]), None).unwrap();
        assert_eq!(alt, out);
        assert_eq!(render_prompt(t, &BTreeMap::new(), None), Err(TutorError::UnboundSlot("Topic".into())));
        assert_eq!(render_prompt(t, &bind(&[("Topic", "  ")]), None), Err(TutorError::UnboundSlot("Topic".into())));
    }

    #[test]
    fn context_preamble_precedes_instruction() {
        let cat = TemplateCatalog::seed();
        let t = cat.get("summarization").unwrap();
        let plain = render_prompt(t, &bind(&[("Topic", "Data Privacy")]), None).unwrap();
        let rich = render_prompt(t, &bind(&[("Topic", "Data Privacy")]), Some(&ctx())).unwrap();
        assert!(rich.ends_with(&plain));
        let obj = rich.find("Explain informed consent").unwrap();
        let vocab = rich.find("anonymisation").unwrap();
        let sot = rich.find("See lesson 1 notes.").unwrap();
        let instr = rich.find("Instruction:\n").unwrap();
        assert!(obj < vocab && vocab < sot && sot < instr);
        // no match, no source-of-truth section
        let other = render_prompt(t, &bind(&[("Topic", "Regression")]), Some(&ctx())).unwrap();
        assert!(!other.contains("Source of truth"));
    }

    #[test]
    fn seed_catalog_has_every_scenario() {
        let cat = TemplateCatalog::seed();
        for s in Scenario::ALL {
            assert_eq!(cat.for_scenario(s).count(), 1, "{s:?}");
        }
        let rp = cat.get("role-playing").unwrap();
        let names: Vec<&str> = rp.slots().iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["Persona", "Topic"]);
    }

    #[test]
    fn malformed_templates_are_rejected() {
        let none = BTreeMap::new();
        assert!(PromptTemplate::new("x", Scenario::Comparison, "open [slot", &none).is_err());
        assert!(PromptTemplate::new("x", Scenario::Comparison, "close] only", &none).is_err());
        assert!(PromptTemplate::new("x", Scenario::Comparison, "empty []", &none).is_err());
        assert!(PromptTemplate::new("x", Scenario::Comparison, "[A]", &bind(&[("B", "b")])).is_err());
        let mut cat = TemplateCatalog::seed();
        cat.merge_json(r#"[{"id":"exit-ticket","scenario":"Explanation","template":"Restating [Idea] in one sentence."}]"#)
            .unwrap();
        assert_eq!(cat.len(), 7);
    }

    #[test]
    fn duplicate_patterns_rejected() {
        let mut c = ctx();
        c.source_of_truth.push(SourceOfTruth { pattern: "Data Privacy".into(), answer: "dup".into() });
        assert!(session().with_context(c).is_err());
    }

    #[test]
    fn turn_emits_pair_and_mock_is_deterministic() {
        let reg = VerbRegistry::standard();
        let mock = ScriptedMock::new();
        let mut a = session();
        let mut b = session();
        let ra = a.run_turn("What is informed consent?", &mock, &reg, at(0)).unwrap();
        let rb = b.run_turn("What is informed consent?", &mock, &reg, at(0)).unwrap();
        assert_eq!(ra.emitted.len(), 2);
        assert_eq!(ra, rb);
        assert_eq!(a.transcript.len(), 2);
        assert_eq!(ra.emitted[1].actor.display_name, "BotCaptain");
    }

    #[test]
    fn failed_turn_leaves_marker_and_emits_nothing() {
        let reg = VerbRegistry::standard();
        let mut s = session();
        let err = s.run_turn("hello?", &FailingClient("connection refused".into()), &reg, at(0)).unwrap_err();
        assert!(matches!(err, TutorError::Client(_)));
        assert!(s.transcript.last().unwrap().failed);
    }

    #[test]
    fn context_reaches_the_client() {
        let reg = VerbRegistry::standard();
        let mock = ScriptedMock::new().with_rule("Lesson objectives:", "grounded");
        let mut s = session().with_context(ctx()).unwrap();
        assert_eq!(s.run_turn("data privacy?", &mock, &reg, at(0)).unwrap().reply, "grounded");
        let mut bare = session();
        assert_ne!(bare.run_turn("data privacy?", &mock, &reg, at(0)).unwrap().reply, "grounded");
    }

    #[test]
    fn role_play_runs_warmer() {
        assert_eq!(LlmParams::for_scenario(Some(Scenario::RolePlaying)).temperature, 0.7);
        assert_eq!(LlmParams::for_scenario(Some(Scenario::Comparison)).temperature, 0.2);
    }

    #[test]
    fn socratic_walk() {
        let reg = VerbRegistry::standard();
        let mut s = session();
        assert_eq!(s.advance_socratic("x", &reg, at(0)).unwrap_err(), TutorError::NotSocratic);
        let q0 = s.start_socratic(SocraticScript::consent(), at(0)).unwrap();
        assert!(q0.starts_with("How do you think informed consent"));
        let f0 = s.advance_socratic("It builds trust.", &reg, at(1)).unwrap();
        assert_eq!(
            f0.utterance,
            "Can you think of any real-world examples where failure to get consent led to ethical concerns?"
        );
        assert_eq!(f0.emitted.len(), 2);
        let nudge = s.advance_socratic("   ", &reg, at(2)).unwrap();
        assert!(nudge.utterance.ends_with(&f0.utterance));
        assert_eq!((nudge.step, nudge.awaiting), (0, Awaiting::FollowUpAnswer));
        assert!(nudge.emitted.is_empty());
        let q1 = s.advance_socratic("Cambridge Analytica.", &reg, at(3)).unwrap();
        assert_eq!((q1.step, q1.awaiting), (1, Awaiting::Answer));
        s.advance_socratic("Loss of trust.", &reg, at(4)).unwrap();
        let closing = s.advance_socratic("Fines and harm.", &reg, at(5)).unwrap();
        assert_eq!(closing.awaiting, Awaiting::Reflection);
        assert!(closing.utterance.contains("how has your understanding changed"));
        let done = s.advance_socratic("Consent is ongoing.", &reg, at(6)).unwrap();
        assert_eq!(done.awaiting, Awaiting::Complete);
        assert_eq!(s.advance_socratic("more", &reg, at(7)).unwrap_err(), TutorError::DialogueComplete);
        assert!(s.transcript.windows(2).all(|w| w[0].at < w[1].at));
    }

    #[test]
    fn grading_contract() {
        let mut s = session();
        s.start_socratic(SocraticScript::consent(), at(0)).unwrap();
        s.advance_socratic("It builds trust.", &VerbRegistry::standard(), at(1)).unwrap();
        let scored = ScriptedMock::new().with_rule("Grade the learner", "Solid reasoning.\nscore: 0.75");
        assert_eq!(grade_socratic_transcript(&s.transcript, "depth", &scored).unwrap().score(), Some(0.75));
        let prose = ScriptedMock::new().with_rule("Grade the learner", "Pretty good overall!");
        let g = grade_socratic_transcript(&s.transcript, "depth", &prose).unwrap();
        assert!(matches!(g, Grade::Indeterminate { ref rationale, .. } if rationale == "Pretty good overall!"));
        let failed = grade_socratic_transcript(&s.transcript, "depth", &FailingClient("down".into())).unwrap();
        assert_eq!(failed.score(), None);
        assert_eq!(grade_socratic_transcript(&[], "depth", &scored), Err(TutorError::EmptyTranscript));
        assert_eq!(parse_score_line("score: 1.5"), None);
        assert_eq!(parse_score_line("Score: 0"), Some(0.0));
    }

    #[test]
    fn integrity_tags() {
        let item = |id: &str, prompt: &str| AssessmentItem { id: id.into(), prompt: prompt.into(), integrity_class: None };
        let items = vec![
            tag_assessment(
                item("poll", "Apply the rat-empathy formulation to the social-media poll."),
                IntegrityQueryClass::SelfReferential,
            ),
            tag_assessment(
                item("four-parts", "Identify the four parts of a statistical question."),
                IntegrityQueryClass::InformationStarved,
            ),
            tag_assessment(item("this-week", "Analyse this week's local sports report."), IntegrityQueryClass::TemporallyBased),
            item("untagged", "Define variance."),
        ];
        let retagged = tag_assessment(items[0].clone(), IntegrityQueryClass::SocraticDialogue);
        assert_eq!(retagged.integrity_class, Some(IntegrityQueryClass::SocraticDialogue));
        let cov = integrity_coverage(&items);
        assert_eq!(cov.untagged, 1);
        assert_eq!(cov.missing_classes(), [IntegrityQueryClass::SocraticDialogue]);
    }
}
