//! Per-learner adaptive engine state behind the `/engine` routes.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use vita_core::adaptive::{
    emit_decision_statement, next_for_state, score_assessment, AssessmentBank, Catalog, CompetencyThresholds,
    ContentNode, EngineError, LearnerState, LearningPath, PathDecision, Principal,
};
use vita_core::xapi::{Agent, Statement, VerbRegistry};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("unknown learner {0:?}")]
    UnknownLearner(String),
    #[error("learner agent has no identifier")]
    AnonymousLearner,
    #[error("give either responses or score")]
    ScoreInput,
    #[error("an override needs a reason")]
    MissingReason,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Responses {
    Map(BTreeMap<String, String>),
    Pairs(Vec<(String, String)>),
}

impl Responses {
    fn into_pairs(self) -> Vec<(String, String)> {
        match self {
            Responses::Map(m) => m.into_iter().collect(),
            Responses::Pairs(p) => p,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct ScoreRequest {
    pub learner: Agent,
    pub assessment_id: String,
    #[serde(default)]
    pub responses: Option<Responses>,
    /// A score computed elsewhere, used instead of `responses`.
    #[serde(default)]
    pub score: Option<f64>,
    #[serde(default)]
    pub at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct OverrideRequest {
    /// Learner key (`Agent::key`).
    pub learner: String,
    pub path: LearningPath,
    #[serde(default)]
    pub reason: String,
    #[serde(default)]
    pub at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct AdvanceRequest {
    pub learner: String,
    pub node: String,
}

/// Where the learner goes next under their effective decision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NextContent {
    pub learner: String,
    pub decision: Option<PathDecision>,
    pub node: Option<ContentNode>,
    /// Set when the decided path has no eligible content left.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exhausted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionResponse {
    pub learner: String,
    pub decision: PathDecision,
    pub quiz_difficulty: u8,
    pub next: NextContent,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip)]
    pub statement: Option<Statement>,
}

#[derive(Debug)]
pub struct EngineService {
    catalog: Catalog,
    bank: AssessmentBank,
    thresholds: CompetencyThresholds,
    learners: Mutex<HashMap<String, Arc<Mutex<LearnerState>>>>,
}

fn next_of(key: &str, state: &LearnerState, catalog: &Catalog) -> NextContent {
    let decision = state.effective_decision().cloned();
    match next_for_state(state, catalog) {
        Ok(node) => NextContent { learner: key.into(), decision, node: node.cloned(), exhausted: None },
        Err(e) => NextContent { learner: key.into(), decision, node: None, exhausted: Some(e.to_string()) },
    }
}

impl EngineService {
    pub fn new(catalog: Catalog, bank: AssessmentBank, thresholds: CompetencyThresholds) -> Self {
        EngineService { catalog, bank, thresholds, learners: Mutex::new(HashMap::new()) }
    }

    pub fn demo() -> Self {
        let catalog = Catalog::demo();
        let bank = AssessmentBank::demo(&catalog);
        Self::new(catalog, bank, CompetencyThresholds::default())
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn thresholds(&self) -> CompetencyThresholds {
        self.thresholds
    }

    fn learner(&self, key: &str) -> Result<Arc<Mutex<LearnerState>>, ServiceError> {
        self.learners.lock().get(key).cloned().ok_or_else(|| ServiceError::UnknownLearner(key.into()))
    }

    fn learner_or_new(&self, agent: &Agent) -> Result<(String, Arc<Mutex<LearnerState>>), ServiceError> {
        let key = agent.key().ok_or(ServiceError::AnonymousLearner)?;
        let entry = self.catalog.entry_node().id.clone();
        let state = self
            .learners
            .lock()
            .entry(key.clone())
            .or_insert_with(|| Arc::new(Mutex::new(LearnerState::new(agent.clone(), entry))))
            .clone();
        Ok((key, state))
    }

    /// Scores an assessment, records the automatic decision (clearing any
    /// override) and moves the learner onto the assessed node.
    pub fn score(&self, req: ScoreRequest, reg: &VerbRegistry, now: DateTime<Utc>) -> Result<DecisionResponse, ServiceError> {
        let assessment = self.bank.get(&req.assessment_id)?;
        let score = match (req.responses, req.score) {
            (Some(r), None) => score_assessment(&r.into_pairs(), &assessment.key)?,
            (None, Some(s)) => s,
            _ => return Err(ServiceError::ScoreInput),
        };
        let (key, state) = self.learner_or_new(&req.learner)?;
        let mut state = state.lock();
        let at = req.at.unwrap_or(now);
        // Validate everything before mutating the learner.
        if !(0.0..=1.0).contains(&score) {
            return Err(EngineError::ScoreOutOfRange(score).into());
        }
        let mut next_state = state.clone();
        next_state.advance_to(&self.catalog, &assessment.node_id)?;
        let decision = next_state.record_assessment(&assessment.id, &assessment.node_id, score, &self.thresholds, at)?;
        *state = next_state;
        let statement = emit_decision_statement(&state, &decision, reg);
        Ok(DecisionResponse {
            learner: key.clone(),
            quiz_difficulty: state.quiz_difficulty,
            next: next_of(&key, &state, &self.catalog),
            decision,
            reason: None,
            statement,
        })
    }

    pub fn override_path(
        &self,
        req: OverrideRequest,
        principal: &Principal,
        reg: &VerbRegistry,
        now: DateTime<Utc>,
    ) -> Result<DecisionResponse, ServiceError> {
        if req.reason.trim().is_empty() {
            return Err(ServiceError::MissingReason);
        }
        let Principal::Instructor(instructor) = principal else {
            return Err(EngineError::Unauthorized(principal.to_string()).into());
        };
        let state = self.learner(&req.learner)?;
        let mut state = state.lock();
        let score = state.last_score().unwrap_or(0.0);
        let decision = PathDecision::override_to(req.path, instructor.clone(), score, req.at.unwrap_or(now));
        state.apply_override(decision.clone(), principal)?;
        tracing::info!(learner = %req.learner, %instructor, path = %req.path, reason = %req.reason, "path override");
        let statement = emit_decision_statement(&state, &decision, reg);
        Ok(DecisionResponse {
            learner: req.learner.clone(),
            quiz_difficulty: state.quiz_difficulty,
            next: next_of(&req.learner, &state, &self.catalog),
            decision,
            reason: Some(req.reason),
            statement,
        })
    }

    pub fn advance(&self, req: &AdvanceRequest) -> Result<NextContent, ServiceError> {
        let state = self.learner(&req.learner)?;
        let mut state = state.lock();
        state.advance_to(&self.catalog, &req.node)?;
        Ok(next_of(&req.learner, &state, &self.catalog))
    }

    pub fn next(&self, key: &str) -> Result<NextContent, ServiceError> {
        let state = self.learner(key)?;
        let state = state.lock();
        Ok(next_of(key, &state, &self.catalog))
    }

    pub fn state(&self, key: &str) -> Result<LearnerState, ServiceError> {
        Ok(self.learner(key)?.lock().clone())
    }
}
