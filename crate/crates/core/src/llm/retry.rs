use std::time::Duration;

use super::{Backend, CompletionRequest, CompletionResult, LlmError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    /// Delay after the failed attempt with zero-based index `attempt`.
    pub fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1u32.checked_shl(attempt).unwrap_or(u32::MAX))
    }
}

/// Calls the backend, retrying transport errors and rate limits with
/// exponential backoff. Other errors are returned immediately.
pub fn with_retry<B: Backend + ?Sized>(
    backend: &B,
    request: &CompletionRequest,
    policy: RetryPolicy,
) -> Result<CompletionResult, LlmError> {
    with_retry_using(backend, request, policy, std::thread::sleep)
}

/// [`with_retry`] with an injectable sleep.
pub fn with_retry_using<B: Backend + ?Sized>(
    backend: &B,
    request: &CompletionRequest,
    policy: RetryPolicy,
    mut sleep: impl FnMut(Duration),
) -> Result<CompletionResult, LlmError> {
    if policy.max_attempts == 0 {
        return Err(LlmError::InvalidRequest("retry policy needs at least one attempt".into()));
    }
    let mut attempt = 0;
    loop {
        match backend.complete(request) {
            Ok(r) => return Ok(r),
            Err(e) if !e.is_retriable() => return Err(e),
            Err(e) => {
                if attempt + 1 >= policy.max_attempts {
                    return Err(LlmError::ExhaustedRetries {
                        attempts: policy.max_attempts,
                        last: Box::new(e),
                    });
                }
                sleep(policy.delay(attempt));
                attempt += 1;
            }
        }
    }
}

/// Backend adapter applying [`with_retry`] to every call.
pub struct Retrying<B> {
    pub inner: B,
    pub policy: RetryPolicy,
}

impl<B: Backend> Backend for Retrying<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, LlmError> {
        with_retry(&self.inner, request, self.policy)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Mutex;

    use super::*;

    struct Flaky {
        script: Mutex<Vec<Result<CompletionResult, LlmError>>>,
        calls: Mutex<u32>,
    }

    impl Flaky {
        fn new(mut script: Vec<Result<CompletionResult, LlmError>>) -> Self {
            script.reverse();
            Flaky {
                script: Mutex::new(script),
                calls: Mutex::new(0),
            }
        }

        fn calls(&self) -> u32 {
            *self.calls.lock().unwrap()
        }
    }

    impl Backend for Flaky {
        fn complete(&self, _: &CompletionRequest) -> Result<CompletionResult, LlmError> {
            *self.calls.lock().unwrap() += 1;
            let mut s = self.script.lock().unwrap();
            if s.len() > 1 {
                s.pop().unwrap()
            } else {
                s[0].clone()
            }
        }
    }

    fn ok() -> Result<CompletionResult, LlmError> {
        Ok(CompletionResult {
            text: "done".into(),
            prompt_tokens: 1,
            completion_tokens: 1,
            latency: Duration::ZERO,
        })
    }

    fn transport() -> Result<CompletionResult, LlmError> {
        Err(LlmError::Transport("reset".into()))
    }

    fn req() -> CompletionRequest {
        CompletionRequest::new("r", "m", "s").with_text("x")
    }

    fn policy(n: u32) -> RetryPolicy {
        RetryPolicy {
            max_attempts: n,
            base_delay: Duration::from_millis(100),
        }
    }

    #[test]
    fn succeeds_after_two_failures() {
        let b = Flaky::new(vec![transport(), Err(LlmError::RateLimited("slow".into())), ok()]);
        let mut delays = Vec::new();
        let r = with_retry_using(&b, &req(), policy(3), |d| delays.push(d));
        assert_eq!(r.unwrap().text, "done");
        assert_eq!(b.calls(), 3);
        assert_eq!(delays, [Duration::from_millis(100), Duration::from_millis(200)]);
    }

    #[test]
    fn auth_error_is_not_retried() {
        let b = Flaky::new(vec![Err(LlmError::Auth("bad key".into())), ok()]);
        let r = with_retry_using(&b, &req(), policy(3), |_| {});
        assert!(matches!(r, Err(LlmError::Auth(_))));
        assert_eq!(b.calls(), 1);
    }

    #[test]
    fn exhausts_retries() {
        let b = Flaky::new(vec![transport()]);
        let r = with_retry_using(&b, &req(), policy(2), |_| {});
        match r {
            Err(LlmError::ExhaustedRetries { attempts: 2, last }) => assert!(matches!(*last, LlmError::Transport(_))),
            other => panic!("{other:?}"),
        }
        assert_eq!(b.calls(), 2);
    }

    #[test]
    fn fixture_miss_is_not_retried() {
        let b = Flaky::new(vec![Err(LlmError::FixtureMiss { key: "k".into() })]);
        assert!(matches!(with_retry_using(&b, &req(), policy(5), |_| {}), Err(LlmError::FixtureMiss { .. })));
        assert_eq!(b.calls(), 1);
    }
}
