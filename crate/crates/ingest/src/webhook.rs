use std::time::Duration;

use vita_core::analytics::{DeliveryError, NotificationSink};

use crate::credentials::redact_url;

/// POSTs the notification JSON to a URL. 5xx, 429 and transport errors are
/// transient; any other non-2xx is permanent.
///
/// Uses a blocking client, so call it off any async runtime.
#[derive(Debug, Clone)]
pub struct WebhookSink {
    url: String,
    client: reqwest::blocking::Client,
}

impl WebhookSink {
    pub fn new(url: impl Into<String>) -> Result<Self, DeliveryError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(15))
            .build()
            .map_err(|e| DeliveryError::Permanent(e.without_url().to_string()))?;
        Ok(WebhookSink { url: url.into(), client })
    }
}

impl NotificationSink for WebhookSink {
    fn describe(&self) -> String {
        format!("webhook:{}", redact_url(&self.url))
    }

    fn deliver(&self, payload: &[u8]) -> Result<(), DeliveryError> {
        let resp = self
            .client
            .post(&self.url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(payload.to_vec())
            .send()
            .map_err(|e| DeliveryError::Transient(e.without_url().to_string()))?;
        let status = resp.status();
        if status.is_success() {
            Ok(())
        } else if status.is_server_error() || status.as_u16() == 429 {
            Err(DeliveryError::Transient(format!("HTTP {status}")))
        } else {
            Err(DeliveryError::Permanent(format!("HTTP {status}")))
        }
    }
}
