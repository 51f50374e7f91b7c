//! Tutor dialogue sessions behind the `/tutor` routes.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use vita_core::tutor::{
    render_prompt, Awaiting, CourseContext, DialogueSession, LlmClient, Scenario, SocraticScript, TemplateCatalog,
    TutorError,
};
use vita_core::xapi::{Agent, Statement, VerbRegistry};

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("learner agent has no identifier")]
    AnonymousLearner,
    #[error(transparent)]
    Tutor(#[from] TutorError),
}

#[derive(Debug, Clone, Deserialize)]
pub struct CreateSession {
    pub learner: Agent,
    pub course_id: String,
    #[serde(default)]
    pub context: Option<CourseContext>,
    #[serde(default)]
    pub scenario: Option<Scenario>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TurnRequest {
    pub message: String,
    #[serde(default)]
    pub at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct SocraticRequest {
    /// Ignored on the call that starts the dialogue.
    #[serde(default)]
    pub answer: Option<String>,
    /// Script to start with; the consent script when absent.
    #[serde(default)]
    pub script: Option<SocraticScript>,
    #[serde(default)]
    pub at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RenderRequest {
    pub template: String,
    pub slots: BTreeMap<String, String>,
    #[serde(default)]
    pub context: Option<CourseContext>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnReply {
    pub session: String,
    pub reply: String,
    pub statement_ids: Vec<uuid::Uuid>,
    #[serde(skip)]
    pub emitted: Vec<Statement>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SocraticReply {
    pub session: String,
    pub utterance: String,
    pub step: usize,
    pub awaiting: Awaiting,
    pub statement_ids: Vec<uuid::Uuid>,
    #[serde(skip)]
    pub emitted: Vec<Statement>,
}

pub struct TutorService {
    templates: TemplateCatalog,
    client: Arc<dyn LlmClient>,
    sessions: Mutex<HashMap<String, Arc<Mutex<DialogueSession>>>>,
    next_id: AtomicU64,
}

impl std::fmt::Debug for TutorService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TutorService").field("client", &self.client.describe()).finish_non_exhaustive()
    }
}

impl TutorService {
    pub fn new(templates: TemplateCatalog, client: Arc<dyn LlmClient>) -> Self {
        TutorService { templates, client, sessions: Mutex::new(HashMap::new()), next_id: AtomicU64::new(1) }
    }

    pub fn templates(&self) -> &TemplateCatalog {
        &self.templates
    }

    pub fn client(&self) -> &dyn LlmClient {
        self.client.as_ref()
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<DialogueSession>>, SessionError> {
        self.sessions.lock().get(id).cloned().ok_or_else(|| SessionError::UnknownSession(id.into()))
    }

    /// Session ids are sequential so mock-mode runs are reproducible.
    pub fn create(&self, req: CreateSession) -> Result<DialogueSession, SessionError> {
        if req.learner.key().is_none() {
            return Err(SessionError::AnonymousLearner);
        }
        let id = format!("session-{:04}", self.next_id.fetch_add(1, Ordering::SeqCst));
        let mut session = DialogueSession::new(id.clone(), req.learner, req.course_id);
        if let Some(ctx) = req.context {
            session = session.with_context(ctx)?;
        }
        if let Some(s) = req.scenario {
            session = session.with_scenario(s);
        }
        self.sessions.lock().insert(id, Arc::new(Mutex::new(session.clone())));
        Ok(session)
    }

    pub fn get(&self, id: &str) -> Result<DialogueSession, SessionError> {
        Ok(self.session(id)?.lock().clone())
    }

    /// Blocks on the LLM client; call from a blocking context. The session
    /// lock is held for the whole exchange, so a session has at most one
    /// request outstanding.
    pub fn turn(&self, id: &str, req: &TurnRequest, reg: &VerbRegistry, now: DateTime<Utc>) -> Result<TurnReply, SessionError> {
        let session = self.session(id)?;
        let mut session = session.lock();
        let out = session.run_turn(&req.message, self.client.as_ref(), reg, req.at.unwrap_or(now))?;
        Ok(TurnReply {
            session: id.into(),
            reply: out.reply,
            statement_ids: out.emitted.iter().map(|s| s.id).collect(),
            emitted: out.emitted,
        })
    }

    /// Starts the dialogue on the first call, then feeds answers to it.
    pub fn socratic(&self, id: &str, req: SocraticRequest, reg: &VerbRegistry, now: DateTime<Utc>) -> Result<SocraticReply, SessionError> {
        let session = self.session(id)?;
        let mut session = session.lock();
        let at = req.at.unwrap_or(now);
        if session.socratic_state().is_none() {
            let utterance = session.start_socratic(req.script.unwrap_or_else(SocraticScript::consent), at)?;
            return Ok(SocraticReply {
                session: id.into(),
                utterance,
                step: 0,
                awaiting: Awaiting::Answer,
                statement_ids: Vec::new(),
                emitted: Vec::new(),
            });
        }
        let out = session.advance_socratic(req.answer.as_deref().unwrap_or(""), reg, at)?;
        Ok(SocraticReply {
            session: id.into(),
            utterance: out.utterance,
            step: out.step,
            awaiting: out.awaiting,
            statement_ids: out.emitted.iter().map(|s| s.id).collect(),
            emitted: out.emitted,
        })
    }

    pub fn render(&self, req: &RenderRequest) -> Result<String, TutorError> {
        let t = self.templates.get(&req.template)?;
        if let Some(ctx) = &req.context {
            ctx.validate()?;
        }
        render_prompt(t, &req.slots, req.context.as_ref())
    }
}
