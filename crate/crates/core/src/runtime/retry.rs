use rand::Rng;
use serde::{Deserialize, Serialize};

pub const BASE_MS: u64 = 50;
pub const JITTER_MS: u64 = 100;

/// Truncated linear backoff for throttled synchronous calls:
/// `wait = min(50 * increase_factor + random_ms, max_backoff_ms)` with
/// `random_ms` uniform in `[0, 100]`. The factor grows by one per retry and
/// goes back to 1 once `50 * increase_factor` exceeds the maximum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_backoff_ms: u64,
    pub increase_factor: u64,
}

impl RetryPolicy {
    pub fn new(max_backoff_ms: u64) -> Self {
        RetryPolicy {
            max_backoff_ms,
            increase_factor: 1,
        }
    }

    /// Wait before the next retry.
    pub fn next_wait(&mut self, rng: &mut impl Rng) -> u64 {
        let r = rng.gen_range(0..=JITTER_MS);
        backoff_wait(self, r)
    }
}

/// One backoff step with the random part supplied.
pub fn backoff_wait(policy: &mut RetryPolicy, random_ms: u64) -> u64 {
    if BASE_MS * policy.increase_factor > policy.max_backoff_ms {
        policy.increase_factor = 1;
    }
    let wait = (BASE_MS * policy.increase_factor + random_ms).min(policy.max_backoff_ms);
    policy.increase_factor += 1;
    wait
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_examples() {
        let mut p = RetryPolicy::new(1000);
        assert_eq!(backoff_wait(&mut p, 0), 50);
        assert_eq!(backoff_wait(&mut p, 100), 200);
        let mut p = RetryPolicy {
            max_backoff_ms: 1000,
            increase_factor: 20,
        };
        assert_eq!(backoff_wait(&mut p, 37), 1000);
        assert_eq!(p.increase_factor, 21);
        assert_eq!(backoff_wait(&mut p, 10), 60);
        assert_eq!(p.increase_factor, 2);
    }
}
