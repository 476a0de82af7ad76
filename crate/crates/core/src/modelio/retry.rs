use std::collections::BTreeSet;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, BackendRequest, BackendResponse};

pub const MAX_RETRIES_LIMIT: u32 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub backoff_factor: f64,
    pub max_delay_ms: u64,
    pub retryable_statuses: BTreeSet<u16>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay_ms: 500,
            backoff_factor: 2.0,
            max_delay_ms: 30_000,
            retryable_statuses: [408, 409, 429, 500, 502, 503, 504].into_iter().collect(),
        }
    }
}

impl RetryPolicy {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_retries > MAX_RETRIES_LIMIT {
            return Err(BackendError::InvalidRequest(format!(
                "max_retries {} exceeds {MAX_RETRIES_LIMIT}",
                self.max_retries
            )));
        }
        if !(self.backoff_factor > 1.0) {
            return Err(BackendError::InvalidRequest("backoff_factor must exceed 1".into()));
        }
        Ok(())
    }

    /// Delay before retry number `retry` (0-based), capped at `max_delay_ms`.
    pub fn delay(&self, retry: u32) -> Duration {
        let ms = self.base_delay_ms as f64 * self.backoff_factor.powi(retry as i32);
        Duration::from_millis(ms.min(self.max_delay_ms as f64).round() as u64)
    }

    /// Connection failures and timeouts are always retryable; HTTP statuses
    /// only when listed.
    pub fn is_retryable(&self, err: &BackendError) -> bool {
        match err {
            BackendError::Timeout => true,
            BackendError::Transport { status: None, .. } => true,
            BackendError::Transport { status: Some(s), .. } => self.retryable_statuses.contains(s),
            _ => false,
        }
    }
}

pub trait Clock: Send + Sync {
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Records requested sleeps instead of sleeping.
#[derive(Debug, Default)]
pub struct SimulatedClock {
    slept: Mutex<Vec<Duration>>,
}

impl SimulatedClock {
    pub fn sleeps(&self) -> Vec<Duration> {
        self.slept.lock().unwrap().clone()
    }
}

impl Clock for SimulatedClock {
    fn sleep(&self, d: Duration) {
        self.slept.lock().unwrap().push(d);
    }
}

/// Call `backend`, retrying retryable failures with exponential backoff.
/// At most `max_retries + 1` attempts; the last error surfaces on exhaustion.
pub fn with_retry(
    backend: &dyn Backend,
    request: &BackendRequest,
    policy: &RetryPolicy,
    clock: &dyn Clock,
) -> Result<BackendResponse, BackendError> {
    policy.validate()?;
    let mut retry = 0;
    loop {
        match backend.call(request) {
            Ok(resp) => return Ok(resp),
            Err(e) if retry < policy.max_retries && policy.is_retryable(&e) => {
                clock.sleep(policy.delay(retry));
                retry += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelio::{Decoding, RequestKind};
    use std::sync::atomic::{AtomicU32, Ordering};

    /// Fails `failures` times with `error`, then answers.
    struct Flaky {
        failures: u32,
        error: BackendError,
        calls: AtomicU32,
    }

    impl Backend for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }
        fn call(&self, _: &BackendRequest) -> Result<BackendResponse, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(self.error.clone())
            } else {
                Ok(BackendResponse::Text("ok".into()))
            }
        }
    }

    fn req() -> BackendRequest {
        BackendRequest {
            kind: RequestKind::Complete,
            text: "hello".into(),
            decoding: Decoding::EXPANSION,
            model: "m".into(),
            sample: 0,
        }
    }

    fn policy(max_retries: u32) -> RetryPolicy {
        RetryPolicy { max_retries, base_delay_ms: 100, backoff_factor: 2.0, ..RetryPolicy::default() }
    }

    #[test]
    fn succeeds_on_third_attempt() {
        let b = Flaky { failures: 2, error: BackendError::Transport { status: Some(503), message: "busy".into() }, calls: AtomicU32::new(0) };
        let clock = SimulatedClock::default();
        assert_eq!(with_retry(&b, &req(), &policy(3), &clock).unwrap(), BackendResponse::Text("ok".into()));
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn network_failure_exhausts_retries() {
        let err = BackendError::Transport { status: None, message: "connection refused".into() };
        let b = Flaky { failures: u32::MAX, error: err.clone(), calls: AtomicU32::new(0) };
        let clock = SimulatedClock::default();
        assert_eq!(with_retry(&b, &req(), &policy(2), &clock), Err(err));
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn non_retryable_status_fails_immediately() {
        let err = BackendError::Transport { status: Some(401), message: "unauthorized".into() };
        let b = Flaky { failures: u32::MAX, error: err.clone(), calls: AtomicU32::new(0) };
        let clock = SimulatedClock::default();
        assert_eq!(with_retry(&b, &req(), &policy(5), &clock), Err(err));
        assert_eq!(b.calls.load(Ordering::SeqCst), 1);
        assert!(clock.sleeps().is_empty());
    }

    #[test]
    fn backoff_sequence_on_simulated_clock() {
        let b = Flaky { failures: u32::MAX, error: BackendError::Timeout, calls: AtomicU32::new(0) };
        let clock = SimulatedClock::default();
        let _ = with_retry(&b, &req(), &policy(3), &clock);
        let ms: Vec<u128> = clock.sleeps().iter().map(Duration::as_millis).collect();
        assert_eq!(ms, vec![100, 200, 400]);
    }

    #[test]
    fn delays_are_capped_and_policy_bounded() {
        let p = RetryPolicy { max_delay_ms: 250, ..policy(10) };
        assert_eq!(p.delay(5), Duration::from_millis(250));
        assert!(RetryPolicy { max_retries: 11, ..policy(0) }.validate().is_err());
        assert!(RetryPolicy { backoff_factor: 1.0, ..policy(1) }.validate().is_err());
    }
}
