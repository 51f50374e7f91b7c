use std::path::{Path, PathBuf};

use vita_core::ingest::{parse_chat_log, transform_batch, ChatLogError, TransformError};
use vita_core::retry::RetryPolicy;
use vita_core::xapi::VerbRegistry;

use crate::credentials::LrsCredentials;
use crate::report::UploadReport;
use crate::upload::upload_batch;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ChatLogError },
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("cannot write report {path}: {source}")]
    WriteReport { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub report: UploadReport,
    pub report_path: PathBuf,
}

/// `<input>.report.json` next to the input.
pub fn default_report_path(input: &Path) -> PathBuf {
    let mut name = input.file_name().unwrap_or_default().to_os_string();
    name.push(".report.json");
    input.with_file_name(name)
}

/// Read, parse, transform and upload one chat-log file, then write the
/// report JSON. Nothing is uploaded and no report is written if the file
/// cannot be read or parsed.
pub async fn run_pipeline(
    input: &Path,
    creds: &LrsCredentials,
    reg: &VerbRegistry,
    policy: &RetryPolicy,
    report_path: Option<&Path>,
) -> Result<PipelineOutcome, PipelineError> {
    let bytes = std::fs::read(input).map_err(|source| PipelineError::Read { path: input.to_path_buf(), source })?;
    let parsed = parse_chat_log(&bytes).map_err(|source| PipelineError::Parse { path: input.to_path_buf(), source })?;
    let stmts = transform_batch(&parsed.records, reg)?;
    tracing::info!(records = parsed.records.len(), statements = stmts.len(), "uploading");

    let mut report = upload_batch(&stmts, creds, policy).await;
    report.warnings = parsed.warnings.iter().map(|w| format!("entry {}: {}", w.index, w.message)).collect();

    let report_path = report_path.map_or_else(|| default_report_path(input), Path::to_path_buf);
    let json = serde_json::to_vec_pretty(&report).expect("report serializes");
    std::fs::write(&report_path, json)
        .map_err(|source| PipelineError::WriteReport { path: report_path.clone(), source })?;
    Ok(PipelineOutcome { report, report_path })
}
