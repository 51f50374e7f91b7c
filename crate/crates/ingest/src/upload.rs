use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use futures::stream::{self, StreamExt};
use reqwest::StatusCode;
use vita_core::retry::RetryPolicy;
use vita_core::xapi::{serialize_statement, Statement};

use crate::credentials::{redact_url, LrsCredentials};
use crate::report::{UploadOutcome, UploadReport};

const REQUEST_TIMEOUT: Duration = Duration::from_secs(30);

/// `<endpoint>/xapi/statements`, tolerating a trailing slash.
pub fn statements_url(endpoint: &str) -> String {
    format!("{}/xapi/statements", endpoint.trim_end_matches('/'))
}

enum Attempt {
    Done(UploadOutcome),
    Retry(String, Option<u16>),
    Fail(String, Option<u16>),
    Rejected(u16),
}

async fn post_once(client: &reqwest::Client, url: &str, creds: &LrsCredentials, body: &str) -> Attempt {
    let resp = client
        .post(url)
        .basic_auth(&creds.key, Some(&creds.secret))
        .header(reqwest::header::CONTENT_TYPE, "application/json")
        .body(body.to_owned())
        .send()
        .await;
    let resp = match resp {
        Ok(r) => r,
        // without_url: the URL may carry userinfo.
        Err(e) => return Attempt::Retry(e.without_url().to_string(), None),
    };
    let status = resp.status();
    let code = Some(status.as_u16());
    if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
        return Attempt::Rejected(status.as_u16());
    }
    if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
        return Attempt::Retry(format!("HTTP {status}"), code);
    }
    let text = match resp.text().await {
        Ok(t) => t,
        Err(e) => return Attempt::Retry(e.without_url().to_string(), code),
    };
    let json: Option<serde_json::Value> = serde_json::from_str(&text).ok();
    let field = |k: &str| json.as_ref().and_then(|v| v.get(k)).and_then(|v| v.as_str()).map(str::to_owned);
    if status == StatusCode::CONFLICT {
        return Attempt::Fail("conflict: id already stored with a different body".into(), code);
    }
    if !status.is_success() {
        let msg = field("message").unwrap_or_else(|| format!("HTTP {status}"));
        return Attempt::Fail(msg, code);
    }
    match field("outcome").as_deref() {
        Some("stored") => Attempt::Done(UploadOutcome::Stored),
        Some("duplicate") => Attempt::Done(UploadOutcome::Duplicate),
        other => Attempt::Fail(format!("unexpected response outcome {other:?}"), code),
    }
}

async fn upload_one(
    client: &reqwest::Client,
    url: &str,
    creds: &LrsCredentials,
    policy: &RetryPolicy,
    abort: &AtomicBool,
    s: &Statement,
) -> (Result<UploadOutcome, (String, Option<u16>)>, u32) {
    let body = match serialize_statement(s) {
        Ok(b) => b,
        Err(e) => return (Err((format!("invalid statement: {e}"), None)), 0),
    };
    let max = policy.max_attempts.max(1);
    let mut attempts = 0;
    loop {
        if abort.load(Ordering::SeqCst) {
            return (Err(("not sent: credentials rejected".into(), None)), attempts);
        }
        attempts += 1;
        match post_once(client, url, creds, &body).await {
            Attempt::Done(o) => return (Ok(o), attempts),
            Attempt::Fail(msg, code) => return (Err((msg, code)), attempts),
            Attempt::Rejected(code) => {
                abort.store(true, Ordering::SeqCst);
                return (Err((format!("credentials rejected (HTTP {code})"), Some(code))), attempts);
            }
            Attempt::Retry(msg, code) if attempts >= max => {
                return (Err((format!("{msg} after {attempts} attempts"), code)), attempts);
            }
            Attempt::Retry(msg, _) => {
                tracing::debug!(id = %s.id, attempt = attempts, "transient upload failure: {msg}");
                tokio::time::sleep(policy.delay_after(attempts)).await;
            }
        }
    }
}

/// POSTs each statement, at most `policy.max_in_flight` at a time. Transport
/// errors, 5xx and 429 are retried with backoff; 401/403 stops the batch and
/// every statement not yet accepted is reported as failed.
pub async fn upload_batch(stmts: &[Statement], creds: &LrsCredentials, policy: &RetryPolicy) -> UploadReport {
    let mut report = UploadReport::new(redact_url(&creds.endpoint));
    let client = match reqwest::Client::builder().timeout(REQUEST_TIMEOUT).build() {
        Ok(c) => c,
        Err(e) => {
            let why = format!("http client: {}", e.without_url());
            for s in stmts {
                report.record(s.id, Err((why.clone(), None)), 0);
            }
            report.aborted = Some(why);
            return report;
        }
    };
    let url = statements_url(&creds.endpoint);
    let abort = AtomicBool::new(false);
    // `buffered` yields in input order, so the report follows the batch.
    let mut results = stream::iter(stmts)
        .map(|s| {
            let (client, url, abort) = (&client, &url, &abort);
            async move { (s.id, upload_one(client, url, creds, policy, abort, s).await) }
        })
        .buffered(policy.max_in_flight.max(1));
    while let Some((id, (outcome, attempts))) = results.next().await {
        report.record(id, outcome, attempts);
    }
    if abort.load(Ordering::SeqCst) {
        report.aborted = Some("credentials rejected by the LRS".into());
    }
    report
}
