//! Exponential backoff with full jitter for rate limits and transport errors.

use std::thread;
use std::time::Duration;

use rand::Rng;

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse};
use crate::model::AgentId;

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub factor: f64,
    /// Full jitter: each delay is drawn uniformly from `[0, cap]`.
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
            factor: 2.0,
            jitter: true,
        }
    }
}

impl RetryPolicy {
    pub fn no_delay() -> Self {
        Self {
            base_delay: Duration::ZERO,
            ..Self::default()
        }
    }

    /// Upper bound of the delay before retry number `retry` (0-based).
    pub fn delay_cap(&self, retry: u32) -> Duration {
        self.base_delay.mul_f64(self.factor.powi(retry as i32))
    }

    pub fn delay(&self, retry: u32) -> Duration {
        let cap = self.delay_cap(retry);
        if !self.jitter || cap.is_zero() {
            return cap;
        }
        cap.mul_f64(rand::rng().random_range(0.0..=1.0))
    }
}

/// Runs `call`, retrying retryable errors up to `policy.max_retries` times.
/// Non-retryable errors propagate immediately; after the last retry the final
/// error is returned.
pub fn with_retry<T, F>(
    policy: &RetryPolicy,
    sleep: impl Fn(Duration),
    mut call: F,
) -> Result<T, BackendError>
where
    F: FnMut() -> Result<T, BackendError>,
{
    let mut retry = 0;
    loop {
        match call() {
            Ok(value) => return Ok(value),
            Err(err) if err.is_retryable() && retry < policy.max_retries => {
                let delay = policy.delay(retry);
                tracing::warn!(error = %err, retry = retry + 1, ?delay, "retrying backend call");
                sleep(delay);
                retry += 1;
            }
            Err(err) => return Err(err),
        }
    }
}

/// Backend decorator applying [`with_retry`] to every call.
pub struct Retrying<B> {
    inner: B,
    policy: RetryPolicy,
    sleep: fn(Duration),
}

impl<B> Retrying<B> {
    pub fn new(inner: B, policy: RetryPolicy) -> Self {
        Self {
            inner,
            policy,
            sleep: thread::sleep,
        }
    }

    pub fn with_sleep(mut self, sleep: fn(Duration)) -> Self {
        self.sleep = sleep;
        self
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: ChatBackend> ChatBackend for Retrying<B> {
    fn complete(
        &self,
        agent: &AgentId,
        request: &ChatRequest,
    ) -> Result<ChatResponse, BackendError> {
        with_retry(&self.policy, self.sleep, || {
            self.inner.complete(agent, request)
        })
    }
}
