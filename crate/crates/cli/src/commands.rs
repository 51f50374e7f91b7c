use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use vita_core::demo::{demo_chat_log, generate_cohort, DemoConfig};
use vita_core::xapi::GranularityTier;
use vita_ingest::{run_pipeline, PipelineError};
use vita_lrs::llm::MOCK_BANNER;
use vita_lrs::service::load_registry;
use vita_lrs::tiers::journal_file_name;
use vita_lrs::{AppState, TieredLrs};

use crate::config::{ConfigError, Settings};

/// A failed command and the exit status it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments or configuration; nothing was done. Exit 2.
    #[error("{0}")]
    Usage(String),
    /// Ran, but some of the data could not be processed. Exit 1.
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

pub fn serve(settings: &Settings) -> Result<(), CliError> {
    let cfg = settings.service_config()?;
    // Bind before touching the journals so a busy port changes nothing.
    let std_listener = std::net::TcpListener::bind(cfg.listen).map_err(|e| usage(format!("cannot listen on {}: {e}", cfg.listen)))?;
    std_listener.set_nonblocking(true).map_err(usage)?;
    let state = AppState::open(&cfg).map_err(usage)?;
    if state.mock_mode {
        eprintln!("{MOCK_BANNER}");
    }
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(usage)?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(std_listener).map_err(usage)?;
        let addr = listener.local_addr().map_err(usage)?;
        println!("listening on {addr}");
        let _ = std::io::stdout().flush();
        vita_lrs::serve(listener, Arc::new(state), shutdown_signal()).await.map_err(data)?;
        eprintln!("shut down; journals flushed");
        Ok(())
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

pub fn ingest(settings: &Settings, file: &Path, report: Option<&Path>) -> Result<(), CliError> {
    if !file.is_file() {
        return Err(usage(format!("{}: no such file", file.display())));
    }
    let creds = settings.lrs_credentials()?;
    let reg = load_registry(settings.registry.as_deref()).map_err(usage)?;
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().map_err(usage)?;
    let out = rt.block_on(run_pipeline(file, &creds, &reg, &settings.retry, report)).map_err(|e| match e {
        PipelineError::Read { .. } => usage(e),
        other => data(other),
    })?;
    println!("{}", out.report.summary_line());
    eprintln!("report written to {}", out.report_path.display());
    if out.report.failed.is_empty() {
        Ok(())
    } else {
        Err(data(format!("{} of {} uploads failed", out.report.failed.len(), out.report.attempted)))
    }
}

#[derive(Debug, Clone)]
pub struct SeedOptions {
    pub seed: u64,
    pub learners: usize,
    pub weeks: u32,
    pub force: bool,
    pub chat_log: Option<PathBuf>,
    pub chat_entries: usize,
}

pub fn seed_demo(settings: &Settings, opts: &SeedOptions) -> Result<(), CliError> {
    let dir = &settings.data_dir;
    let occupied = match std::fs::read_dir(dir) {
        Ok(mut entries) => entries.next().is_some(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => false,
        Err(e) => return Err(usage(format!("{}: {e}", dir.display()))),
    };
    if occupied && !opts.force {
        return Err(usage(format!("{} is not empty; pass --force to replace its journals", dir.display())));
    }
    if opts.learners == 0 || opts.weeks == 0 {
        return Err(usage("--learners and --weeks must be at least 1"));
    }
    if occupied {
        for t in GranularityTier::ALL {
            let p = dir.join(journal_file_name(t));
            if p.exists() {
                std::fs::remove_file(&p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            }
        }
    }
    let reg = load_registry(settings.registry.as_deref()).map_err(usage)?;
    let mut cfg = DemoConfig { seed: opts.seed, learners: opts.learners, weeks: opts.weeks, ..DemoConfig::default() };
    if let Some(d) = settings.term_start {
        cfg.term_start = d;
    }
    let cohort = generate_cohort(&cfg, &reg);
    let lrs = TieredLrs::open(dir, reg).map_err(usage)?;
    let n = cohort.statements.len();
    lrs.forward_batch(cohort.statements).map_err(data)?;
    lrs.flush().map_err(data)?;
    println!("seeded {n} statements for {} learners over {} weeks into {}", opts.learners, opts.weeks, dir.display());
    if let Some(path) = &opts.chat_log {
        std::fs::write(path, demo_chat_log(opts.chat_entries, opts.seed)).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        println!("wrote {} chat-log entries to {}", opts.chat_entries, path.display());
    }
    Ok(())
}
