//! Wire-protocol conformance checks, run against any scorer or generation endpoint.

use std::fmt;

use crate::error::Error;
use crate::genpipe::{Dialect, GenerationBackend, HttpBackend};
use crate::metrics::cosine;
use crate::retry::RetryPolicy;
use crate::scoring::{HttpScorer, Scorer, TokenizerId};
use crate::wire::CompleteRequest;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub outcome: Result<(), String>,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.outcome.is_ok()
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.outcome {
            Ok(()) => write!(f, "ok   {}", self.name),
            Err(e) => write!(f, "FAIL {}: {e}", self.name),
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn texts(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

const BATCH: &[&str] = &[
    "I love this wonderful day.",
    "The train leaves at noon.",
    "This is absolutely terrible and awful.",
];

async fn sentiment_order(s: &dyn Scorer) -> Result<(), String> {
    let batch = texts(BATCH);
    let scores = s.sentiment(&batch).await.map_err(|e| e.to_string())?;
    ensure(scores.len() == batch.len(), || format!("{} rows for {} texts", scores.len(), batch.len()))?;
    for (i, text) in batch.iter().enumerate() {
        let single = s.sentiment(std::slice::from_ref(text)).await.map_err(|e| e.to_string())?;
        ensure(single[0] == scores[i], || format!("row {i} differs between batched and single calls"))?;
    }
    let reversed: Vec<String> = batch.iter().rev().cloned().collect();
    let back = s.sentiment(&reversed).await.map_err(|e| e.to_string())?;
    ensure(back.iter().rev().eq(scores.iter()), || "reversing the batch does not reverse the rows".into())
}

async fn embed_shape(s: &dyn Scorer) -> Result<(), String> {
    let batch = texts(&[BATCH[0], BATCH[1], BATCH[0]]);
    let v = s.embed(&batch).await.map_err(|e| e.to_string())?;
    ensure(v.len() == 3, || format!("{} vectors for 3 texts", v.len()))?;
    ensure(v[0] == v[2], || "duplicate texts embed differently".into())?;
    let dim = v[0].dim();
    let again = s.embed(&texts(&[BATCH[2]])).await.map_err(|e| e.to_string())?;
    ensure(again[0].dim() == dim, || format!("dimension changed from {dim} to {}", again[0].dim()))?;
    let c = cosine(&v[1], &v[1]).map_err(|e| e.to_string())?;
    ensure((c - 1.0).abs() < 1e-9, || format!("self cosine {c}"))
}

async fn tokenize_counts(s: &dyn Scorer) -> Result<(), String> {
    let batch = texts(&["hello world", "She checked the time on her watch."]);
    let counts = s.tokenize(&batch, TokenizerId::Gpt2).await.map_err(|e| e.to_string())?;
    ensure(counts.len() == 2, || format!("{} counts for 2 texts", counts.len()))?;
    ensure(counts.iter().all(|&c| c > 0), || format!("non-positive count in {counts:?}"))?;
    let swapped = s
        .tokenize(&[batch[1].clone(), batch[0].clone()], TokenizerId::Gpt2)
        .await
        .map_err(|e| e.to_string())?;
    ensure(swapped == [counts[1], counts[0]], || "token counts not in input order".into())
}

async fn rejects_empty_batch(s: &dyn Scorer) -> Result<(), String> {
    match s.sentiment(&[]).await {
        Err(Error::RejectedParameter { .. } | Error::Protocol { .. } | Error::Argument(_)) => Ok(()),
        Err(e) => Err(format!("unexpected error kind: {e}")),
        Ok(_) => Err("empty batch accepted".into()),
    }
}

async fn rejects_oversized_batch(s: &dyn Scorer, max_batch: usize) -> Result<(), String> {
    let big = vec![BATCH[1].to_string(); max_batch + 1];
    match s.sentiment(&big).await {
        Err(Error::Protocol { message, .. }) if message.contains("413") => Ok(()),
        Err(e) => Err(format!("expected a 413 protocol error, got {e}")),
        Ok(_) => Err(format!("batch of {} accepted", max_batch + 1)),
    }
}

async fn deterministic(s: &dyn Scorer) -> Result<(), String> {
    let batch = texts(BATCH);
    let a = s.sentiment(&batch).await.map_err(|e| e.to_string())?;
    let b = s.sentiment(&batch).await.map_err(|e| e.to_string())?;
    ensure(a == b, || "sentiment differs across identical calls".into())?;
    let a = s.embed(&batch).await.map_err(|e| e.to_string())?;
    let b = s.embed(&batch).await.map_err(|e| e.to_string())?;
    ensure(a == b, || "embeddings differ across identical calls".into())
}

/// Checks a scorer service at `base_url`. `max_batch` is the service's documented limit.
pub async fn scorer_suite(base_url: &str, max_batch: usize) -> Vec<Check> {
    let s = HttpScorer::new(base_url, RetryPolicy::none());
    vec![
        Check { name: "sentiment rows are simplex and ordered", outcome: sentiment_order(&s).await },
        Check { name: "embeddings have constant dimension", outcome: embed_shape(&s).await },
        Check { name: "token counts are ordered", outcome: tokenize_counts(&s).await },
        Check { name: "empty batch is rejected", outcome: rejects_empty_batch(&s).await },
        Check { name: "oversized batch is rejected with 413", outcome: rejects_oversized_batch(&s, max_batch).await },
        Check { name: "responses are deterministic", outcome: deterministic(&s).await },
    ]
}

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

async fn completes(b: &dyn GenerationBackend) -> Result<(), String> {
    let text = b.complete(&request("Her passion is", 7)).await.map_err(|e| e.to_string())?;
    ensure(!text.trim().is_empty(), || "empty completion".into())
}

async fn seed_replay(b: &dyn GenerationBackend) -> Result<(), String> {
    let a = b.complete(&request("Her passion is", 11)).await.map_err(|e| e.to_string())?;
    let c = b.complete(&request("Her passion is", 11)).await.map_err(|e| e.to_string())?;
    ensure(a == c, || format!("same seed gave {a:?} and {c:?}"))
}

async fn rejects_top_p(b: &dyn GenerationBackend) -> Result<(), String> {
    let mut r = request("Her passion is", 1);
    r.top_p = 1.5;
    match b.complete(&r).await {
        Err(Error::RejectedParameter { param, .. }) if param == "top_p" => Ok(()),
        Err(e) => Err(format!("expected top_p rejection, got {e}")),
        Ok(_) => Err("top_p=1.5 accepted".into()),
    }
}

/// Checks a generation service at `base_url` speaking `dialect`. Only meaningful
/// for deterministic (seeded) services.
pub async fn backend_suite(base_url: &str, dialect: Dialect) -> Vec<Check> {
    let b = HttpBackend::new(base_url, dialect, "conformance", RetryPolicy::none());
    vec![
        Check { name: "completion is non-empty", outcome: completes(&b).await },
        Check { name: "same seed replays", outcome: seed_replay(&b).await },
        Check { name: "invalid top_p is rejected by name", outcome: rejects_top_p(&b).await },
    ]
}
