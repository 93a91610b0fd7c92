//! Bounded retry with exponential backoff for the HTTP clients.

use std::future::Future;
use std::time::Duration;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub request_timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            initial_backoff: Duration::from_millis(250),
            max_backoff: Duration::from_secs(8),
            request_timeout: Duration::from_secs(120),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            ..Default::default()
        }
    }

    fn backoff(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry);
        self.initial_backoff.saturating_mul(factor).min(self.max_backoff)
    }
}

/// Outcome of a single attempt.
pub enum Attempt<T> {
    Done(T),
    /// Transient failure (connection, timeout, 5xx, 429).
    Retry(String),
    Fail(Error),
}

pub async fn with_retry<T, F, Fut>(policy: &RetryPolicy, endpoint: &str, mut op: F) -> Result<T, Error>
where
    F: FnMut() -> Fut,
    Fut: Future<Output = Attempt<T>>,
{
    let mut attempts = 0;
    loop {
        attempts += 1;
        match op().await {
            Attempt::Done(v) => return Ok(v),
            Attempt::Fail(e) => return Err(e),
            Attempt::Retry(message) => {
                if attempts > policy.max_retries {
                    return Err(Error::Transport {
                        endpoint: endpoint.to_string(),
                        attempts,
                        message,
                    });
                }
                tracing::warn!(endpoint, attempts, %message, "transient failure, retrying");
                tokio::time::sleep(policy.backoff(attempts - 1)).await;
            }
        }
    }
}
