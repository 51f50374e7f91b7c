use serde::{Deserialize, Serialize};
use uuid::Uuid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UploadOutcome {
    Stored,
    Duplicate,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UploadResult {
    pub id: Uuid,
    pub outcome: UploadOutcome,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedUpload {
    pub id: Uuid,
    pub error: String,
    pub attempts: u32,
    /// HTTP status of the last response, if there was one.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub status: Option<u16>,
}

/// Holds `attempted == stored + duplicates + failed.len()`, and `results`
/// has one entry per attempted statement in input order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UploadReport {
    /// Endpoint with userinfo stripped.
    pub endpoint: String,
    pub attempted: usize,
    pub stored: usize,
    pub duplicates: usize,
    pub failed: Vec<FailedUpload>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub aborted: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
    pub results: Vec<UploadResult>,
}

impl UploadReport {
    pub fn new(endpoint: String) -> Self {
        UploadReport { endpoint, ..Default::default() }
    }

    pub fn record(&mut self, id: Uuid, outcome: Result<UploadOutcome, (String, Option<u16>)>, attempts: u32) {
        self.attempted += 1;
        let outcome = match outcome {
            Ok(o) => o,
            Err((error, status)) => {
                self.failed.push(FailedUpload { id, error, attempts, status });
                UploadOutcome::Failed
            }
        };
        match outcome {
            UploadOutcome::Stored => self.stored += 1,
            UploadOutcome::Duplicate => self.duplicates += 1,
            UploadOutcome::Failed => {}
        }
        self.results.push(UploadResult { id, outcome, attempts });
    }

    pub fn is_conserved(&self) -> bool {
        self.attempted == self.stored + self.duplicates + self.failed.len() && self.results.len() == self.attempted
    }

    pub fn summary_line(&self) -> String {
        let mut line = format!(
            "attempted={} stored={} duplicates={} failed={}",
            self.attempted,
            self.stored,
            self.duplicates,
            self.failed.len()
        );
        if let Some(why) = &self.aborted {
            line.push_str(&format!(" aborted: {why}"));
        }
        line
    }
}
