//! Generation backends: the wire-protocol client and an in-process stub.

use std::sync::atomic::{AtomicUsize, Ordering};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::{join_url, post_json};
use crate::retry::RetryPolicy;
use crate::scoring::stub::charged_tokens;
use crate::seed::{derive_seed, fnv1a};
use crate::wire::{
    CompleteRequest, CompleteResponse, CompletionsRequest, CompletionsResponse, COMPLETE_PATH,
    COMPLETIONS_PATH,
};

#[async_trait]
pub trait GenerationBackend: Send + Sync {
    /// One completion for one request.
    async fn complete(&self, request: &CompleteRequest) -> Result<String>;

    fn descriptor(&self) -> String;
}

#[async_trait]
impl<B: GenerationBackend + ?Sized> GenerationBackend for std::sync::Arc<B> {
    async fn complete(&self, request: &CompleteRequest) -> Result<String> {
        (**self).complete(request).await
    }

    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    /// `POST /v1/complete` → `{"text"}`.
    Native,
    /// `POST /v1/completions` → `{"choices":[{"text"}]}`.
    Completions,
}

#[derive(Debug)]
pub struct HttpBackend {
    base_url: String,
    dialect: Dialect,
    model: String,
    client: reqwest::Client,
    retry: RetryPolicy,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, dialect: Dialect, model: impl Into<String>, retry: RetryPolicy) -> Self {
        HttpBackend {
            base_url: base_url.into(),
            dialect,
            model: model.into(),
            client: reqwest::Client::new(),
            retry,
        }
    }
}

#[async_trait]
impl GenerationBackend for HttpBackend {
    async fn complete(&self, request: &CompleteRequest) -> Result<String> {
        match self.dialect {
            Dialect::Native => {
                let url = join_url(&self.base_url, COMPLETE_PATH);
                let resp: CompleteResponse = post_json(&self.client, &url, request, &self.retry).await?;
                Ok(resp.text)
            }
            Dialect::Completions => {
                let url = join_url(&self.base_url, COMPLETIONS_PATH);
                let body = CompletionsRequest {
                    model: self.model.clone(),
                    prompt: request.prompt.clone(),
                    max_tokens: request.max_tokens,
                    top_p: request.top_p,
                    top_k: request.top_k,
                    repetition_penalty: request.repetition_penalty,
                    seed: request.seed,
                    n: 1,
                };
                let resp: CompletionsResponse = post_json(&self.client, &url, &body, &self.retry).await?;
                resp.choices
                    .into_iter()
                    .next()
                    .map(|c| c.text)
                    .ok_or_else(|| Error::Protocol {
                        endpoint: url,
                        message: "response has no choices".into(),
                    })
            }
        }
    }

    fn descriptor(&self) -> String {
        let dialect = match self.dialect {
            Dialect::Native => "native",
            Dialect::Completions => "completions",
        };
        format!("{}#{dialect}#{}", self.base_url, self.model)
    }
}

/// Label-independent continuation fragments served by [`StubBackend`].
pub const STUB_CONTINUATIONS: &[&str] = &[
    "a quiet walk along the river at dusk",
    "the old clock on the kitchen wall",
    "a map of the northern hills",
    "something she learned from her grandmother",
    "the sound of rain against the window",
    "a small wooden boat in the harbor",
    "the second chapter of a long novel",
    "a cup of tea before the meeting",
    "the bright colors of the market",
    "an afternoon spent sorting old papers",
    "a lovely view from the top floor",
    "the train schedule posted by the door",
    "a tired dog sleeping by the fire",
    "the garden behind the library",
    "a letter written in blue ink",
    "a broken gate near the stairs",
];

/// Deterministic in-process backend.
///
/// The continuation is picked from [`STUB_CONTINUATIONS`] by a hash of the request
/// seed and (unless [`StubBackend::prompt_independent`]) the prompt. With `echo`, the
/// output starts by repeating the prompt's trailing fragment, the way models often
/// repeat the stem. With `leaky`, sentiment-lexicon words found in the prompt are
/// copied into the continuation, which makes expression leakage fire by construction.
#[derive(Debug, Default)]
pub struct StubBackend {
    echo: bool,
    leaky: bool,
    prompt_independent: bool,
    max_tokens_limit: Option<u32>,
    calls: AtomicUsize,
}

impl StubBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn echo(mut self) -> Self {
        self.echo = true;
        self
    }

    pub fn leaky(mut self) -> Self {
        self.leaky = true;
        self
    }

    pub fn prompt_independent(mut self) -> Self {
        self.prompt_independent = true;
        self
    }

    /// Reject requests whose `max_tokens` exceeds `limit`.
    pub fn with_max_tokens_limit(mut self, limit: u32) -> Self {
        self.max_tokens_limit = Some(limit);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn validate(&self, r: &CompleteRequest) -> Result<()> {
        let reject = |param: &str, message: String| {
            Err(Error::RejectedParameter {
                param: param.into(),
                message,
            })
        };
        if !(r.top_p > 0.0 && r.top_p <= 1.0) {
            return reject("top_p", format!("{} outside (0, 1]", r.top_p));
        }
        if r.repetition_penalty.is_nan() || r.repetition_penalty < 1.0 {
            return reject("repetition_penalty", format!("{} below 1", r.repetition_penalty));
        }
        if r.max_tokens == 0 {
            return reject("max_tokens", "must be at least 1".into());
        }
        if let Some(limit) = self.max_tokens_limit {
            if r.max_tokens > limit {
                return reject("max_tokens", format!("{} exceeds limit {limit}", r.max_tokens));
            }
        }
        Ok(())
    }

    /// The stub's output for a request, without bookkeeping.
    pub fn render(&self, r: &CompleteRequest) -> Result<String> {
        self.validate(r)?;
        let prompt_key = if self.prompt_independent { 0 } else { fnv1a(r.prompt.as_bytes()) };
        let pick = derive_seed(r.seed, &[prompt_key]) % STUB_CONTINUATIONS.len() as u64;
        let mut words: Vec<String> = Vec::new();
        if self.echo {
            let tail = r
                .prompt
                .rsplit(['.', '!', '?', '\n'])
                .next()
                .unwrap_or_default();
            words.extend(tail.split_whitespace().map(str::to_string));
        }
        words.extend(STUB_CONTINUATIONS[pick as usize].split_whitespace().map(str::to_string));
        if self.leaky {
            let charged = charged_tokens(&r.prompt);
            if !charged.is_empty() {
                words.push("and".into());
                words.extend(charged);
            }
        }
        words.truncate(r.max_tokens as usize);
        Ok(format!("{}.", words.join(" ")))
    }
}

#[async_trait]
impl GenerationBackend for StubBackend {
    async fn complete(&self, request: &CompleteRequest) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.render(request)
    }

    fn descriptor(&self) -> String {
        let mut d = String::from("stub");
        for (on, tag) in [(self.echo, "echo"), (self.leaky, "leaky"), (self.prompt_independent, "fixed")] {
            if on {
                d.push('+');
                d.push_str(tag);
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(prompt: &str, seed: u64) -> CompleteRequest {
        CompleteRequest {
            prompt: prompt.into(),
            top_p: 0.9,
            top_k: 50,
            repetition_penalty: 1.1,
            max_tokens: 128,
            seed,
        }
    }

    #[tokio::test]
    async fn stub_is_seed_keyed_and_deterministic() {
        let b = StubBackend::new();
        let a1 = b.complete(&request("Her passion is", 1)).await.unwrap();
        let a2 = b.complete(&request("Her passion is", 1)).await.unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b.calls(), 2);
        let distinct: std::collections::HashSet<_> =
            (0..50).map(|s| b.render(&request("Her passion is", s)).unwrap()).collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn echo_repeats_the_stem() {
        let b = StubBackend::new().echo();
        let out = b.render(&request("Complete the sentence: I sat. Her passion is", 3)).unwrap();
        assert!(out.starts_with("Her passion is "), "{out}");
    }

    #[test]
    fn leaky_copies_lexicon_words() {
        let b = StubBackend::new().leaky();
        let out = b.render(&request("I lost my keys. Her passion is", 3)).unwrap();
        assert!(out.ends_with("and lost."), "{out}");
        let clean = b.render(&request("Her passion is", 3)).unwrap();
        assert!(!clean.contains(" and "), "{clean}");
    }

    #[test]
    fn prompt_independent_ignores_prompt() {
        let b = StubBackend::new().prompt_independent();
        assert_eq!(b.render(&request("a", 5)).unwrap(), b.render(&request("b", 5)).unwrap());
    }

    #[test]
    fn max_tokens_caps_words() {
        let b = StubBackend::new().echo();
        let mut r = request("one two three four five", 1);
        r.max_tokens = 2;
        assert_eq!(b.render(&r).unwrap(), "one two.");
    }

    #[test]
    fn rejects_parameters_by_name() {
        let b = StubBackend::new().with_max_tokens_limit(64);
        match b.render(&request("x", 1)).unwrap_err() {
            Error::RejectedParameter { param, .. } => assert_eq!(param, "max_tokens"),
            other => panic!("unexpected {other}"),
        }
    }
}
