use std::fmt;

use reqwest::Url;

pub const ENV_ENDPOINT: &str = "LRS_ENDPOINT";
pub const ENV_KEY: &str = "LRS_KEY";
pub const ENV_SECRET: &str = "LRS_SECRET";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CredentialsError {
    #[error("{0} is not set")]
    Missing(&'static str),
    #[error("endpoint is not a valid http(s) URL: {0}")]
    BadEndpoint(String),
}

/// LRS endpoint plus basic-auth key and secret. `Debug` never shows the
/// key or secret, and there is no `Serialize`.
#[derive(Clone, PartialEq, Eq)]
pub struct LrsCredentials {
    pub endpoint: String,
    pub key: String,
    pub secret: String,
}

impl fmt::Debug for LrsCredentials {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LrsCredentials")
            .field("endpoint", &redact_url(&self.endpoint))
            .field("key", &"<redacted>")
            .field("secret", &"<redacted>")
            .finish()
    }
}

impl LrsCredentials {
    pub fn new(endpoint: impl Into<String>, key: impl Into<String>, secret: impl Into<String>) -> Self {
        LrsCredentials { endpoint: endpoint.into(), key: key.into(), secret: secret.into() }
    }

    /// Reads `LRS_ENDPOINT`, `LRS_KEY` and `LRS_SECRET`.
    pub fn from_env() -> Result<Self, CredentialsError> {
        let var = |name| std::env::var(name).ok().filter(|v| !v.is_empty()).ok_or(CredentialsError::Missing(name));
        let creds = LrsCredentials::new(var(ENV_ENDPOINT)?, var(ENV_KEY)?, var(ENV_SECRET)?);
        creds.validate()?;
        Ok(creds)
    }

    pub fn validate(&self) -> Result<(), CredentialsError> {
        match Url::parse(&self.endpoint) {
            Ok(u) if matches!(u.scheme(), "http" | "https") => Ok(()),
            _ => Err(CredentialsError::BadEndpoint(redact_url(&self.endpoint))),
        }
    }
}

/// The URL with any userinfo and query string removed; unparsable input
/// becomes a placeholder rather than being echoed.
pub fn redact_url(raw: &str) -> String {
    match Url::parse(raw) {
        Ok(mut u) => {
            let _ = u.set_username("");
            let _ = u.set_password(None);
            u.set_query(None);
            u.to_string()
        }
        Err(_) => "<unparsable url>".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn debug_hides_secrets() {
        let c = LrsCredentials::new("https://user:pw@lrs.example.org/x?token=t0k", "key-abc", "secret-xyz");
        let shown = format!("{c:?}");
        for hidden in ["key-abc", "secret-xyz", "pw", "t0k"] {
            assert!(!shown.contains(hidden), "{shown}");
        }
        assert!(shown.contains("lrs.example.org"));
    }

    #[test]
    fn endpoint_must_be_http() {
        assert!(LrsCredentials::new("ftp://x", "k", "s").validate().is_err());
        assert!(LrsCredentials::new("http://127.0.0.1:8080", "k", "s").validate().is_ok());
    }
}
