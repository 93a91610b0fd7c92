use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::retry::{with_retry, Attempt, RetryPolicy};
use crate::wire::ErrorBody;

pub(crate) fn join_url(base: &str, path: &str) -> String {
    format!("{}{}", base.trim_end_matches('/'), path)
}

/// POSTs a JSON body, retrying transient failures. 4xx responses map to config or
/// protocol errors and are never retried.
pub(crate) async fn post_json<B, R>(
    client: &reqwest::Client,
    url: &str,
    body: &B,
    policy: &RetryPolicy,
) -> Result<R>
where
    B: Serialize + ?Sized,
    R: DeserializeOwned,
{
    with_retry(policy, url, || async {
        let resp = match client
            .post(url)
            .timeout(policy.request_timeout)
            .json(body)
            .send()
            .await
        {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status();
        if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        let bytes = match resp.bytes().await {
            Ok(b) => b,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        if !status.is_success() {
            let parsed: Option<ErrorBody> = serde_json::from_slice(&bytes).ok();
            return Attempt::Fail(match parsed {
                Some(ErrorBody {
                    error,
                    param: Some(param),
                }) => Error::RejectedParameter {
                    param,
                    message: error,
                },
                Some(ErrorBody { error, .. }) => Error::Protocol {
                    endpoint: url.to_string(),
                    message: format!("HTTP {status}: {error}"),
                },
                None => Error::Protocol {
                    endpoint: url.to_string(),
                    message: format!("HTTP {status}: {}", String::from_utf8_lossy(&bytes)),
                },
            });
        }
        match serde_json::from_slice(&bytes) {
            Ok(v) => Attempt::Done(v),
            Err(e) => Attempt::Fail(Error::Protocol {
                endpoint: url.to_string(),
                message: format!("malformed response body: {e}"),
            }),
        }
    })
    .await
}
