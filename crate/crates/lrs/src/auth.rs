//! Shared-secret basic auth for mutating routes.
//!
//! Any user name is accepted with the shared secret. Names listed as
//! instructors authenticate as instructors, everyone else as learners.

use std::collections::BTreeSet;

use axum::http::{header, HeaderMap};
use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use vita_core::adaptive::Principal;

pub const DEFAULT_INSTRUCTOR: &str = "instructor";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthConfig {
    pub secret: String,
    pub instructors: BTreeSet<String>,
}

impl AuthConfig {
    pub fn new(secret: impl Into<String>) -> Self {
        AuthConfig { secret: secret.into(), instructors: BTreeSet::from([DEFAULT_INSTRUCTOR.to_string()]) }
    }

    /// `None` when the header is missing, malformed or carries the wrong secret.
    pub fn authenticate(&self, headers: &HeaderMap) -> Option<Principal> {
        let value = headers.get(header::AUTHORIZATION)?.to_str().ok()?;
        let encoded = value.strip_prefix("Basic ").or_else(|| value.strip_prefix("basic "))?;
        let decoded = String::from_utf8(STANDARD.decode(encoded.trim()).ok()?).ok()?;
        let (user, password) = decoded.split_once(':')?;
        if user.is_empty() || !constant_time_eq(password.as_bytes(), self.secret.as_bytes()) {
            return None;
        }
        Some(if self.instructors.contains(user) {
            Principal::Instructor(user.to_string())
        } else {
            Principal::Learner(user.to_string())
        })
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// Value for an `Authorization` header.
pub fn basic_header(user: &str, secret: &str) -> String {
    format!("Basic {}", STANDARD.encode(format!("{user}:{secret}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn headers(v: &str) -> HeaderMap {
        let mut h = HeaderMap::new();
        h.insert(header::AUTHORIZATION, v.parse().unwrap());
        h
    }

    #[test]
    fn roles_and_rejections() {
        let auth = AuthConfig::new("s3cret");
        assert_eq!(auth.authenticate(&headers(&basic_header("instructor", "s3cret"))), Some(Principal::Instructor("instructor".into())));
        assert_eq!(auth.authenticate(&headers(&basic_header("dana", "s3cret"))), Some(Principal::Learner("dana".into())));
        assert_eq!(auth.authenticate(&headers(&basic_header("dana", "nope"))), None);
        assert_eq!(auth.authenticate(&headers("Bearer x")), None);
        assert_eq!(auth.authenticate(&HeaderMap::new()), None);
    }
}
