//! Chat-log ingestion: parse an exported log, turn each interaction into an
//! asked/responded statement pair, and upload them to an LRS.
//!
//! Uploads are idempotent because statement ids are derived from the record
//! content; re-running a file reports everything as duplicates.

mod credentials;
mod pipeline;
mod report;
mod upload;
mod webhook;

pub use credentials::{redact_url, CredentialsError, LrsCredentials};
pub use pipeline::{default_report_path, run_pipeline, PipelineError, PipelineOutcome};
pub use report::{FailedUpload, UploadOutcome, UploadReport, UploadResult};
pub use upload::{statements_url, upload_batch};
pub use webhook::WebhookSink;
