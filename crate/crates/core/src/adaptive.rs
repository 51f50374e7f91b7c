//! Formative-assessment scoring and three-path routing (progression,
//! reinforcement, remediation) with instructor override.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::xapi::{
    activity_types, format_timestamp, verbs, ActivityObject, Agent, GranularityTier, Statement, StatementResult,
    VerbRegistry,
};

/// Sliding window and cutoffs for quiz difficulty adaptation.
pub const DIFFICULTY_WINDOW: usize = 3;
pub const DIFFICULTY_UP_MEAN: f64 = 0.85;
pub const DIFFICULTY_DOWN_MEAN: f64 = 0.5;
pub const MIN_DIFFICULTY: u8 = 1;
pub const MAX_DIFFICULTY: u8 = 5;

const DECISION_NAMESPACE: Uuid = Uuid::from_u128(0x1f0e_77a4_5d2b_5c90_8a3e_44c1_09b7_d2e6);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("thresholds need 0 <= reinforcement_min < progression_min <= 1 (got {reinforcement_min}, {progression_min})")]
    InvalidThresholds { progression_min: f64, reinforcement_min: f64 },
    #[error("score {0} outside [0,1]")]
    ScoreOutOfRange(f64),
    #[error("assessment has no responses")]
    EmptyAssessment,
    #[error("item {0:?} is not in the answer key")]
    ItemNotInKey(String),
    #[error("inventory item {0:?} is not mapped to a declared skill")]
    UnmappedInventoryItem(String),
    #[error("decision origin must be an instructor override")]
    NotAnOverride,
    #[error("principal {0} may not override learning paths")]
    Unauthorized(String),
    #[error("no eligible {0} content; instructor attention needed")]
    PathExhausted(LearningPath),
    #[error("unknown content node {0:?}")]
    UnknownNode(String),
    #[error("unknown assessment {0:?}")]
    UnknownAssessment(String),
    #[error("catalog: {0}")]
    Catalog(String),
    #[error("decision at {at} precedes the last history entry at {last}")]
    HistoryOutOfOrder { at: DateTime<Utc>, last: DateTime<Utc> },
}

/// Ordered `Remediation < Reinforcement < Progression`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LearningPath {
    Remediation,
    Reinforcement,
    Progression,
}

impl LearningPath {
    pub fn as_str(self) -> &'static str {
        match self {
            LearningPath::Remediation => "Remediation",
            LearningPath::Reinforcement => "Reinforcement",
            LearningPath::Progression => "Progression",
        }
    }
}

impl fmt::Display for LearningPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LearningPath {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        // "Primary Path" and "New Path" are alternative labels for the first two.
        match s.to_ascii_lowercase().as_str() {
            "progression" | "primary" | "primary path" => Ok(LearningPath::Progression),
            "reinforcement" | "new" | "new path" => Ok(LearningPath::Reinforcement),
            "remediation" => Ok(LearningPath::Remediation),
            other => Err(format!("unknown path {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompetencyThresholds {
    pub progression_min: f64,
    pub reinforcement_min: f64,
}

impl Default for CompetencyThresholds {
    fn default() -> Self {
        CompetencyThresholds { progression_min: 0.8, reinforcement_min: 0.6 }
    }
}

impl CompetencyThresholds {
    pub fn new(progression_min: f64, reinforcement_min: f64) -> Result<Self, EngineError> {
        let t = CompetencyThresholds { progression_min, reinforcement_min };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let ok = self.progression_min > 0.0
            && self.progression_min <= 1.0
            && self.reinforcement_min >= 0.0
            && self.reinforcement_min < 1.0
            && self.reinforcement_min < self.progression_min;
        if ok {
            Ok(())
        } else {
            Err(EngineError::InvalidThresholds {
                progression_min: self.progression_min,
                reinforcement_min: self.reinforcement_min,
            })
        }
    }
}

/// Band lookup. Lower bounds are inclusive: a score equal to a threshold
/// lands in the higher band.
pub fn route(score: f64, t: &CompetencyThresholds) -> LearningPath {
    if score >= t.progression_min {
        LearningPath::Progression
    } else if score >= t.reinforcement_min {
        LearningPath::Reinforcement
    } else {
        LearningPath::Remediation
    }
}

/// Equal-weight fraction of correct responses. Answers compare after trimming,
/// case-insensitively.
pub fn score_assessment(responses: &[(String, String)], key: &BTreeMap<String, String>) -> Result<f64, EngineError> {
    if responses.is_empty() {
        return Err(EngineError::EmptyAssessment);
    }
    let mut correct = 0usize;
    for (item, answer) in responses {
        let expected = key.get(item).ok_or_else(|| EngineError::ItemNotInKey(item.clone()))?;
        if expected.trim().eq_ignore_ascii_case(answer.trim()) {
            correct += 1;
        }
    }
    Ok(correct as f64 / responses.len() as f64)
}

/// Mean of the last three scores: >= 0.85 steps up, <= 0.5 steps down, clamped to 1..=5.
pub fn adapt_quiz_difficulty(history: &[f64], current: u8) -> u8 {
    let current = current.clamp(MIN_DIFFICULTY, MAX_DIFFICULTY);
    if history.is_empty() {
        return current;
    }
    let window = &history[history.len().saturating_sub(DIFFICULTY_WINDOW)..];
    let mean = window.iter().sum::<f64>() / window.len() as f64;
    if mean >= DIFFICULTY_UP_MEAN {
        (current + 1).min(MAX_DIFFICULTY)
    } else if mean <= DIFFICULTY_DOWN_MEAN {
        current.saturating_sub(1).max(MIN_DIFFICULTY)
    } else {
        current
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventoryForm {
    pub skills: Vec<String>,
    /// item id -> skill
    pub items: BTreeMap<String, String>,
}

/// Per-skill fraction of correct/affirmed answered items. Declared skills with
/// no answered items are 0.
pub fn init_skills_inventory(
    form: &InventoryForm,
    responses: &[(String, bool)],
) -> Result<BTreeMap<String, f64>, EngineError> {
    let declared: BTreeSet<&str> = form.skills.iter().map(String::as_str).collect();
    let mut tally: BTreeMap<&str, (u32, u32)> = BTreeMap::new();
    for (item, affirmed) in responses {
        let skill = form
            .items
            .get(item)
            .filter(|s| declared.contains(s.as_str()))
            .ok_or_else(|| EngineError::UnmappedInventoryItem(item.clone()))?;
        let e = tally.entry(skill.as_str()).or_default();
        e.1 += 1;
        if *affirmed {
            e.0 += 1;
        }
    }
    Ok(form
        .skills
        .iter()
        .map(|skill| {
            let level = tally.get(skill.as_str()).map_or(0.0, |(ok, n)| *ok as f64 / *n as f64);
            (skill.clone(), level)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DecisionOrigin {
    Auto,
    Override { instructor: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathDecision {
    pub path: LearningPath,
    pub origin: DecisionOrigin,
    pub decided_at: DateTime<Utc>,
    pub score: f64,
}

impl PathDecision {
    pub fn auto(score: f64, t: &CompetencyThresholds, decided_at: DateTime<Utc>) -> Self {
        PathDecision { path: route(score, t), origin: DecisionOrigin::Auto, decided_at, score }
    }

    pub fn override_to(path: LearningPath, instructor: impl Into<String>, score: f64, decided_at: DateTime<Utc>) -> Self {
        PathDecision { path, origin: DecisionOrigin::Override { instructor: instructor.into() }, decided_at, score }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Principal {
    Instructor(String),
    Learner(String),
}

impl fmt::Display for Principal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Principal::Instructor(id) => write!(f, "instructor {id}"),
            Principal::Learner(id) => write!(f, "learner {id}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContentRole {
    Advance,
    Practice,
    Review,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentNode {
    pub id: String,
    pub title: String,
    pub topic: String,
    pub difficulty: u8,
    pub role: ContentRole,
    #[serde(default)]
    pub prerequisites: Vec<String>,
}

/// Validated content catalog: unique ids, known prerequisites, difficulty in
/// 1..=5, acyclic prerequisite graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    nodes: BTreeMap<String, ContentNode>,
    /// Longest prerequisite chain below each node; roots are level 0.
    levels: BTreeMap<String, u32>,
}

impl Catalog {
    pub fn new(nodes: Vec<ContentNode>) -> Result<Self, EngineError> {
        if nodes.is_empty() {
            return Err(EngineError::Catalog("catalog is empty".into()));
        }
        let mut map = BTreeMap::new();
        for node in nodes {
            if !(MIN_DIFFICULTY..=MAX_DIFFICULTY).contains(&node.difficulty) {
                return Err(EngineError::Catalog(format!("{}: difficulty {} outside 1..=5", node.id, node.difficulty)));
            }
            let id = node.id.clone();
            if map.insert(id.clone(), node).is_some() {
                return Err(EngineError::Catalog(format!("duplicate node id {id:?}")));
            }
        }
        for node in map.values() {
            for p in &node.prerequisites {
                if !map.contains_key(p) {
                    return Err(EngineError::Catalog(format!("{}: unknown prerequisite {p:?}", node.id)));
                }
            }
        }
        // Kahn's algorithm; levels fall out of the topological order.
        let mut indegree: BTreeMap<&str, usize> =
            map.values().map(|n| (n.id.as_str(), n.prerequisites.len())).collect();
        let mut dependents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for n in map.values() {
            for p in &n.prerequisites {
                dependents.entry(p.as_str()).or_default().push(n.id.as_str());
            }
        }
        let mut queue: VecDeque<&str> = indegree.iter().filter(|(_, d)| **d == 0).map(|(id, _)| *id).collect();
        let mut levels: BTreeMap<String, u32> = BTreeMap::new();
        while let Some(id) = queue.pop_front() {
            let level = map[id].prerequisites.iter().map(|p| levels[p] + 1).max().unwrap_or(0);
            levels.insert(id.to_string(), level);
            for dep in dependents.get(id).into_iter().flatten() {
                let d = indegree.get_mut(dep).expect("known node");
                *d -= 1;
                if *d == 0 {
                    queue.push_back(dep);
                }
            }
        }
        if levels.len() != map.len() {
            let cyclic: Vec<&str> = map.keys().filter(|k| !levels.contains_key(*k)).map(String::as_str).collect();
            return Err(EngineError::Catalog(format!("prerequisite cycle through {}", cyclic.join(", "))));
        }
        Ok(Catalog { nodes: map, levels })
    }

    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        let nodes: Vec<ContentNode> = serde_json::from_str(text).map_err(|e| EngineError::Catalog(e.to_string()))?;
        Self::new(nodes)
    }

    /// The six-node demo catalog shipped with the crate.
    pub fn demo() -> Self {
        Self::from_json(include_str!("../data/catalog.json")).expect("bundled catalog is valid")
    }

    pub fn get(&self, id: &str) -> Option<&ContentNode> {
        self.nodes.get(id)
    }

    pub fn level(&self, id: &str) -> Option<u32> {
        self.levels.get(id).copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ContentNode> {
        self.nodes.values()
    }

    /// All transitive prerequisites of `id`, excluding `id` itself.
    pub fn prerequisite_closure(&self, id: &str) -> BTreeSet<&str> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<&str> = self.nodes.get(id).map(|n| n.prerequisites.iter().map(String::as_str).collect()).unwrap_or_default();
        while let Some(p) = stack.pop() {
            if seen.insert(p) {
                stack.extend(self.nodes[p].prerequisites.iter().map(String::as_str));
            }
        }
        seen
    }

    /// Entry node for a new learner: lowest (level, difficulty, id) Advance node.
    pub fn entry_node(&self) -> &ContentNode {
        self.nodes
            .values()
            .filter(|n| n.role == ContentRole::Advance)
            .min_by_key(|n| (self.levels[&n.id], n.difficulty, n.id.clone()))
            .unwrap_or_else(|| self.nodes.values().next().expect("catalog is non-empty"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// `None` for instructor overrides.
    pub assessment_id: Option<String>,
    /// Content node the learner was on (or was assessed on).
    pub node_id: String,
    pub score: f64,
    pub decision: PathDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerState {
    pub learner: Agent,
    pub skills_inventory: BTreeMap<String, f64>,
    pub history: Vec<HistoryEntry>,
    pub current_node: String,
    pub pending_override: Option<PathDecision>,
    pub quiz_difficulty: u8,
}

impl LearnerState {
    pub fn new(learner: Agent, start_node: impl Into<String>) -> Self {
        LearnerState {
            learner,
            skills_inventory: BTreeMap::new(),
            history: Vec::new(),
            current_node: start_node.into(),
            pending_override: None,
            quiz_difficulty: MIN_DIFFICULTY,
        }
    }

    fn check_order(&self, at: DateTime<Utc>) -> Result<(), EngineError> {
        match self.history.last() {
            Some(last) if at < last.decision.decided_at => {
                Err(EngineError::HistoryOutOfOrder { at, last: last.decision.decided_at })
            }
            _ => Ok(()),
        }
    }

    /// Records a scored assessment: routes it, clears any pending override,
    /// appends to history and adapts quiz difficulty.
    pub fn record_assessment(
        &mut self,
        assessment_id: &str,
        node_id: &str,
        score: f64,
        thresholds: &CompetencyThresholds,
        at: DateTime<Utc>,
    ) -> Result<PathDecision, EngineError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(EngineError::ScoreOutOfRange(score));
        }
        self.check_order(at)?;
        let decision = PathDecision::auto(score, thresholds, at);
        self.pending_override = None;
        self.history.push(HistoryEntry {
            assessment_id: Some(assessment_id.to_string()),
            node_id: node_id.to_string(),
            score,
            decision: decision.clone(),
        });
        self.quiz_difficulty = adapt_quiz_difficulty(&self.assessment_scores(), self.quiz_difficulty);
        Ok(decision)
    }

    /// Installs an instructor override that stands until the next scored
    /// assessment. Later overrides replace earlier ones; all are kept in history.
    pub fn apply_override(&mut self, decision: PathDecision, principal: &Principal) -> Result<(), EngineError> {
        let DecisionOrigin::Override { instructor } = &decision.origin else {
            return Err(EngineError::NotAnOverride);
        };
        match principal {
            Principal::Instructor(id) if id == instructor => {}
            other => return Err(EngineError::Unauthorized(other.to_string())),
        }
        if !(0.0..=1.0).contains(&decision.score) {
            return Err(EngineError::ScoreOutOfRange(decision.score));
        }
        self.check_order(decision.decided_at)?;
        self.history.push(HistoryEntry {
            assessment_id: None,
            node_id: self.current_node.clone(),
            score: decision.score,
            decision: decision.clone(),
        });
        self.pending_override = Some(decision);
        Ok(())
    }

    /// The pending override if any, otherwise the latest automatic decision.
    pub fn effective_decision(&self) -> Option<&PathDecision> {
        self.pending_override.as_ref().or_else(|| {
            self.history.iter().rev().map(|e| &e.decision).find(|d| d.origin == DecisionOrigin::Auto)
        })
    }

    pub fn assessment_scores(&self) -> Vec<f64> {
        self.history.iter().filter(|e| e.assessment_id.is_some()).map(|e| e.score).collect()
    }

    pub fn last_score(&self) -> Option<f64> {
        self.history.iter().rev().find(|e| e.assessment_id.is_some()).map(|e| e.score)
    }

    /// Nodes mastered through an automatic Progression decision on an assessment.
    pub fn satisfied_nodes(&self) -> BTreeSet<&str> {
        self.history
            .iter()
            .filter(|e| {
                e.assessment_id.is_some()
                    && e.decision.origin == DecisionOrigin::Auto
                    && e.decision.path == LearningPath::Progression
            })
            .map(|e| e.node_id.as_str())
            .collect()
    }

    pub fn advance_to(&mut self, catalog: &Catalog, node_id: &str) -> Result<(), EngineError> {
        if catalog.get(node_id).is_none() {
            return Err(EngineError::UnknownNode(node_id.to_string()));
        }
        self.current_node = node_id.to_string();
        Ok(())
    }
}

/// Picks the next content node for `decision`. Ties break by (difficulty, id).
///
/// * Progression: lowest-difficulty unmastered Advance node (other than the
///   current one) whose prerequisites are mastered. The current node counts as
///   mastered, since a Progression decision asserts competence on it.
/// * Reinforcement: Practice node on the current node's topic.
/// * Remediation: Review node on the topic of the lowest-level unmastered
///   transitive prerequisite of the current node, or of the current node
///   itself when all prerequisites are mastered.
pub fn next_content<'c>(
    state: &LearnerState,
    catalog: &'c Catalog,
    decision: &PathDecision,
) -> Result<&'c ContentNode, EngineError> {
    let current = catalog
        .get(&state.current_node)
        .ok_or_else(|| EngineError::UnknownNode(state.current_node.clone()))?;
    let mastered = state.satisfied_nodes();
    let pick = |role: ContentRole, pred: &dyn Fn(&ContentNode) -> bool| {
        catalog
            .nodes()
            .filter(|n| n.role == role && pred(n))
            .min_by(|a, b| a.difficulty.cmp(&b.difficulty).then_with(|| a.id.cmp(&b.id)))
    };
    let chosen = match decision.path {
        LearningPath::Progression => {
            let done = |id: &str| id == current.id || mastered.contains(id);
            pick(ContentRole::Advance, &|n| {
                n.id != current.id && !mastered.contains(n.id.as_str()) && n.prerequisites.iter().all(|p| done(p))
            })
        }
        LearningPath::Reinforcement => pick(ContentRole::Practice, &|n| n.topic == current.topic),
        LearningPath::Remediation => {
            let gap = catalog
                .prerequisite_closure(&current.id)
                .into_iter()
                .filter(|p| !mastered.contains(p))
                .min_by_key(|p| (catalog.level(p).unwrap_or(0), p.to_string()))
                .and_then(|p| catalog.get(p))
                .unwrap_or(current);
            pick(ContentRole::Review, &|n| n.topic == gap.topic)
        }
    };
    chosen.ok_or(EngineError::PathExhausted(decision.path))
}

/// Next content under the learner's effective decision.
pub fn next_for_state<'c>(state: &LearnerState, catalog: &'c Catalog) -> Result<Option<&'c ContentNode>, EngineError> {
    match state.effective_decision() {
        Some(decision) => next_content(state, catalog, decision).map(Some),
        None => Ok(None),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assessment {
    pub id: String,
    pub node_id: String,
    pub key: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssessmentBank {
    assessments: BTreeMap<String, Assessment>,
}

impl AssessmentBank {
    pub fn new(items: Vec<Assessment>, catalog: &Catalog) -> Result<Self, EngineError> {
        let mut assessments = BTreeMap::new();
        for a in items {
            if catalog.get(&a.node_id).is_none() {
                return Err(EngineError::UnknownNode(a.node_id));
            }
            assessments.insert(a.id.clone(), a);
        }
        Ok(AssessmentBank { assessments })
    }

    pub fn from_json(text: &str, catalog: &Catalog) -> Result<Self, EngineError> {
        let items: Vec<Assessment> = serde_json::from_str(text).map_err(|e| EngineError::Catalog(e.to_string()))?;
        Self::new(items, catalog)
    }

    /// Checkpoint quizzes for [`Catalog::demo`].
    pub fn demo(catalog: &Catalog) -> Self {
        Self::from_json(include_str!("../data/assessments.json"), catalog).expect("bundled assessments are valid")
    }

    pub fn get(&self, id: &str) -> Result<&Assessment, EngineError> {
        self.assessments.get(id).ok_or_else(|| EngineError::UnknownAssessment(id.to_string()))
    }
}

pub const ORIGIN_EXTENSION: &str = "decisionOrigin";

pub fn path_activity(path: LearningPath) -> ActivityObject {
    ActivityObject::new(
        format!("urn:vita:path:{}", path.as_str().to_ascii_lowercase()),
        path.as_str(),
        activity_types::OBJECTIVE,
    )
}

/// xAPI record of a routing decision: `<learner> routed <Path>`, scored, at the
/// tier the registry assigns to `routed`. The id is derived from the learner,
/// decision time, path and origin, so re-emitting is idempotent.
pub fn emit_decision_statement(state: &LearnerState, decision: &PathDecision, reg: &VerbRegistry) -> Option<Statement> {
    let verb = reg.verb(verbs::ROUTED)?;
    let tier = reg.min_tier(verbs::ROUTED).unwrap_or(GranularityTier::Transactional);
    let origin = match &decision.origin {
        DecisionOrigin::Auto => "auto".to_string(),
        DecisionOrigin::Override { instructor } => format!("override:{instructor}"),
    };
    let name = format!(
        "{}\u{1f}{}\u{1f}{}\u{1f}{origin}",
        state.learner.key().unwrap_or_default(),
        format_timestamp(&decision.decided_at),
        decision.path
    );
    let mut s = Statement::new(
        Uuid::new_v5(&DECISION_NAMESPACE, name.as_bytes()),
        state.learner.clone(),
        verb,
        path_activity(decision.path),
        decision.decided_at,
        tier,
    )
    .with_result(StatementResult {
        success: decision.path == LearningPath::Progression,
        score_scaled: Some(decision.score),
        response: None,
    });
    s.extensions.insert(ORIGIN_EXTENSION.into(), serde_json::Value::String(origin));
    Some(s)
}
