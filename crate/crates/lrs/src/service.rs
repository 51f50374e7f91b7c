//! Service configuration and the shared state every route works against.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use vita_core::adaptive::{AssessmentBank, Catalog, CompetencyThresholds, EngineError};
use vita_core::analytics::{AnalyticsError, Term};
use vita_core::clock::{Clock, SystemClock};
use vita_core::tutor::{LlmClient, TemplateCatalog, TutorError};
use vita_core::xapi::{RegistryError, VerbRegistry};

use crate::auth::AuthConfig;
use crate::engine::EngineService;
use crate::journal::JournalError;
use crate::llm::{client_for, LiveLlmConfig};
use crate::tiers::TieredLrs;
use crate::tutor::TutorService;

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    pub auth_secret: String,
    pub instructors: Vec<String>,
    /// Extra verbs merged over the standard vocabulary.
    pub registry_path: Option<PathBuf>,
    pub catalog_path: Option<PathBuf>,
    pub assessments_path: Option<PathBuf>,
    /// Extra prompt templates merged over the seed catalog.
    pub templates_path: Option<PathBuf>,
    pub thresholds: CompetencyThresholds,
    pub term_start: NaiveDate,
    pub term_weeks: u32,
    pub llm: Option<LiveLlmConfig>,
}

impl ServiceConfig {
    pub fn new(listen: SocketAddr, data_dir: impl Into<PathBuf>, auth_secret: impl Into<String>) -> Self {
        ServiceConfig {
            listen,
            data_dir: data_dir.into(),
            auth_secret: auth_secret.into(),
            instructors: vec![crate::auth::DEFAULT_INSTRUCTOR.into()],
            registry_path: None,
            catalog_path: None,
            assessments_path: None,
            templates_path: None,
            thresholds: CompetencyThresholds::default(),
            term_start: NaiveDate::from_ymd_opt(2025, 1, 6).expect("valid date"),
            term_weeks: vita_core::demo::DEMO_WEEKS,
            llm: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("verb registry {path}: {source}")]
    Registry { path: PathBuf, source: RegistryError },
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("adaptive engine: {0}")]
    Engine(#[from] EngineError),
    #[error("tutor: {0}")]
    Tutor(#[from] TutorError),
    #[error("term: {0}")]
    Term(#[from] AnalyticsError),
    #[error("auth secret must not be empty")]
    EmptySecret,
}

fn read(path: &Path) -> Result<String, StartupError> {
    std::fs::read_to_string(path).map_err(|source| StartupError::Read { path: path.to_path_buf(), source })
}

pub fn load_registry(path: Option<&Path>) -> Result<VerbRegistry, StartupError> {
    match path {
        None => Ok(VerbRegistry::standard()),
        Some(p) => VerbRegistry::load(p).map_err(|source| StartupError::Registry { path: p.to_path_buf(), source }),
    }
}

pub struct AppState {
    pub lrs: TieredLrs,
    pub engine: EngineService,
    pub tutor: TutorService,
    pub auth: AuthConfig,
    pub clock: Arc<dyn Clock>,
    pub term: Term,
    pub mock_mode: bool,
}

impl AppState {
    /// Loads every configured file and replays the journals. Nothing is
    /// started if any of it fails.
    pub fn open(cfg: &ServiceConfig) -> Result<Self, StartupError> {
        if cfg.auth_secret.is_empty() {
            return Err(StartupError::EmptySecret);
        }
        let registry = load_registry(cfg.registry_path.as_deref())?;
        let catalog = match &cfg.catalog_path {
            Some(p) => Catalog::from_json(&read(p)?)?,
            None => Catalog::demo(),
        };
        let bank = match &cfg.assessments_path {
            Some(p) => AssessmentBank::from_json(&read(p)?, &catalog)?,
            None => AssessmentBank::demo(&catalog),
        };
        cfg.thresholds.validate()?;
        let mut templates = TemplateCatalog::seed();
        if let Some(p) = &cfg.templates_path {
            templates.merge_json(&read(p)?)?;
        }
        let term = Term::new(cfg.term_start, cfg.term_weeks)?;
        let lrs = TieredLrs::open(&cfg.data_dir, registry)?;
        let (client, mock_mode) = client_for(cfg.llm.clone());
        let mut auth = AuthConfig::new(cfg.auth_secret.clone());
        auth.instructors = cfg.instructors.iter().cloned().collect();
        Ok(AppState {
            lrs,
            engine: EngineService::new(catalog, bank, cfg.thresholds),
            tutor: TutorService::new(templates, client),
            auth,
            clock: Arc::new(SystemClock),
            term,
            mock_mode,
        })
    }

    /// In-memory state with demo catalog data, for tests.
    pub fn in_memory(secret: &str, client: Arc<dyn LlmClient>, mock_mode: bool) -> Self {
        AppState {
            lrs: TieredLrs::in_memory(VerbRegistry::standard()),
            engine: EngineService::demo(),
            tutor: TutorService::new(TemplateCatalog::seed(), client),
            auth: AuthConfig::new(secret),
            clock: Arc::new(SystemClock),
            term: Term::new(NaiveDate::from_ymd_opt(2025, 1, 6).expect("valid date"), vita_core::demo::DEMO_WEEKS)
                .expect("weeks >= 1"),
            mock_mode,
        }
    }
}
