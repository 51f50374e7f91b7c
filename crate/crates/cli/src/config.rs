//! Settings resolution. Each value comes from the first source that sets it:
//! command-line flag, then environment variable, then config file, then the
//! built-in default. Secrets have no flag.
//!
//! | setting       | flag           | env                | file key        | default          |
//! |---------------|----------------|--------------------|-----------------|------------------|
//! | listen        | `--listen`     | `VITA_LISTEN`      | `listen`        | `127.0.0.1:8080` |
//! | data dir      | `--data-dir`   | `VITA_DATA_DIR`    | `data_dir`      | `vita-data`      |
//! | verb registry | `--registry`   | `VITA_REGISTRY`    | `registry`      | built-in verbs   |
//! | auth secret   |                | `VITA_AUTH_SECRET` | `auth_secret`   | none             |
//! | LRS endpoint  | `--endpoint`   | `LRS_ENDPOINT`     | `lrs.endpoint`  | none             |
//! | LRS key       |                | `LRS_KEY`          | `lrs.key`       | none             |
//! | LRS secret    |                | `LRS_SECRET`       | `lrs.secret`    | none             |
//! | upload width  | `--concurrency`| `VITA_CONCURRENCY` | `retry.max_in_flight` | 4          |
//!
//! File-only keys: `instructors`, `catalog`, `assessments`, `templates`,
//! `term_start`, `term_weeks`, `[thresholds]`, `[retry]`. Relative paths in
//! the file are resolved against the file's directory.

use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Deserialize;
use vita_core::adaptive::CompetencyThresholds;
use vita_core::retry::RetryPolicy;
use vita_ingest::LrsCredentials;
use vita_lrs::llm::LiveLlmConfig;
use vita_lrs::ServiceConfig;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
pub const DEFAULT_DATA_DIR: &str = "vita-data";
pub const ENV_CONFIG: &str = "VITA_CONFIG";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config file {path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("{name}: {message}")]
    Value { name: &'static str, message: String },
    #[error("{0}")]
    Missing(String),
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrsSection {
    pub endpoint: Option<String>,
    pub key: Option<String>,
    pub secret: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub listen: Option<String>,
    pub data_dir: Option<PathBuf>,
    pub auth_secret: Option<String>,
    pub instructors: Option<Vec<String>>,
    pub registry: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub assessments: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub term_start: Option<NaiveDate>,
    pub term_weeks: Option<u32>,
    pub thresholds: Option<CompetencyThresholds>,
    #[serde(default)]
    pub lrs: LrsSection,
    pub retry: Option<RetryPolicy>,
}

impl FileConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, String> {
        let mut cfg: FileConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        for p in [&mut cfg.data_dir, &mut cfg.registry, &mut cfg.catalog, &mut cfg.assessments, &mut cfg.templates]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let err = |message: String| ConfigError::File { path: path.to_path_buf(), message };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("."))).map_err(err)
    }
}

/// Values given on the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Flags {
    pub listen: Option<String>,
    pub data_dir: Option<PathBuf>,
    pub registry: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub concurrency: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub listen: String,
    pub data_dir: PathBuf,
    pub registry: Option<PathBuf>,
    pub auth_secret: Option<String>,
    pub instructors: Option<Vec<String>>,
    pub catalog: Option<PathBuf>,
    pub assessments: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub term_start: Option<NaiveDate>,
    pub term_weeks: Option<u32>,
    pub thresholds: Option<CompetencyThresholds>,
    pub lrs: LrsSection,
    pub retry: RetryPolicy,
}

pub fn resolve(flags: &Flags, env: impl Fn(&str) -> Option<String>, file: FileConfig) -> Result<Settings, ConfigError> {
    let env = |name: &str| env(name).filter(|v| !v.is_empty());
    let mut retry = file.retry.unwrap_or_default();
    let env_width = env("VITA_CONCURRENCY")
        .map(|v| v.parse::<usize>().map_err(|_| ConfigError::Value { name: "VITA_CONCURRENCY", message: format!("not a count: {v:?}") }))
        .transpose()?;
    if let Some(n) = flags.concurrency.or(env_width) {
        retry.max_in_flight = n;
    }
    if retry.max_in_flight == 0 || retry.max_attempts == 0 {
        return Err(ConfigError::Value { name: "retry", message: "max_in_flight and max_attempts must be at least 1".into() });
    }
    Ok(Settings {
        listen: flags.listen.clone().or_else(|| env("VITA_LISTEN")).or(file.listen).unwrap_or_else(|| DEFAULT_LISTEN.into()),
        data_dir: flags
            .data_dir
            .clone()
            .or_else(|| env("VITA_DATA_DIR").map(PathBuf::from))
            .or(file.data_dir)
            .unwrap_or_else(|| DEFAULT_DATA_DIR.into()),
        registry: flags.registry.clone().or_else(|| env("VITA_REGISTRY").map(PathBuf::from)).or(file.registry),
        auth_secret: env("VITA_AUTH_SECRET").or(file.auth_secret),
        instructors: file.instructors,
        catalog: file.catalog,
        assessments: file.assessments,
        templates: file.templates,
        term_start: file.term_start,
        term_weeks: file.term_weeks,
        thresholds: file.thresholds,
        lrs: LrsSection {
            endpoint: flags.endpoint.clone().or_else(|| env("LRS_ENDPOINT")).or(file.lrs.endpoint),
            key: env("LRS_KEY").or(file.lrs.key),
            secret: env("LRS_SECRET").or(file.lrs.secret),
        },
        retry,
    })
}

impl Settings {
    pub fn listen_addr(&self) -> Result<SocketAddr, ConfigError> {
        let bad = |message: String| ConfigError::Value { name: "listen", message };
        self.listen
            .to_socket_addrs()
            .map_err(|e| bad(format!("{:?}: {e}", self.listen)))?
            .next()
            .ok_or_else(|| bad(format!("{:?} resolves to no address", self.listen)))
    }

    pub fn service_config(&self) -> Result<ServiceConfig, ConfigError> {
        let secret = self
            .auth_secret
            .clone()
            .ok_or_else(|| ConfigError::Missing("no auth secret: set VITA_AUTH_SECRET or auth_secret in the config file".into()))?;
        let mut cfg = ServiceConfig::new(self.listen_addr()?, &self.data_dir, secret);
        cfg.registry_path = self.registry.clone();
        cfg.catalog_path = self.catalog.clone();
        cfg.assessments_path = self.assessments.clone();
        cfg.templates_path = self.templates.clone();
        if let Some(i) = &self.instructors {
            cfg.instructors = i.clone();
        }
        if let Some(t) = self.thresholds {
            cfg.thresholds = t;
        }
        if let Some(d) = self.term_start {
            cfg.term_start = d;
        }
        if let Some(w) = self.term_weeks {
            cfg.term_weeks = w;
        }
        cfg.llm = LiveLlmConfig::from_env();
        Ok(cfg)
    }

    pub fn lrs_credentials(&self) -> Result<LrsCredentials, ConfigError> {
        let need = |v: &Option<String>, env: &str, key: &str| {
            v.clone().ok_or_else(|| ConfigError::Missing(format!("LRS {key} not configured: set {env} or lrs.{key} in the config file")))
        };
        let creds = LrsCredentials::new(
            need(&self.lrs.endpoint, "LRS_ENDPOINT", "endpoint")?,
            need(&self.lrs.key, "LRS_KEY", "key")?,
            need(&self.lrs.secret, "LRS_SECRET", "secret")?,
        );
        creds.validate().map_err(|e| ConfigError::Value { name: "endpoint", message: e.to_string() })?;
        Ok(creds)
    }
}
