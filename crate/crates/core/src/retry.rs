use std::time::Duration;

use serde::{Deserialize, Serialize};

/// Exponential backoff: attempt `n` (1-based) that fails waits
/// `base * factor^(n-1)` before attempt `n+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub factor: f64,
    /// Upload requests allowed in flight at once.
    pub max_in_flight: usize,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 5, base_delay_ms: 200, factor: 2.0, max_in_flight: 4 }
    }
}

impl RetryPolicy {
    /// Delay to wait after failed attempt `attempt` (1-based).
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let exp = attempt.saturating_sub(1) as i32;
        let ms = self.base_delay_ms as f64 * self.factor.powi(exp);
        Duration::from_millis(ms.min(60_000.0) as u64)
    }

    /// A policy with no sleeping, for tests.
    pub fn immediate(max_attempts: u32) -> Self {
        RetryPolicy { max_attempts, base_delay_ms: 0, ..Default::default() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_backoff_doubles() {
        let p = RetryPolicy::default();
        let delays: Vec<u64> = (1..=4).map(|a| p.delay_after(a).as_millis() as u64).collect();
        assert_eq!(delays, vec![200, 400, 800, 1600]);
    }
}
