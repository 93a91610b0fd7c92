//! Sentiment probabilities, sentence embeddings and token counts.

mod http;
pub mod stub;

use std::str::FromStr;
use std::sync::Arc;

use async_trait::async_trait;

use crate::error::{Error, Result};
use crate::types::{Embedding, SentimentScore};

pub use http::HttpScorer;
pub use stub::StubScorer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenizerId {
    Gpt2,
    Whitespace,
}

impl TokenizerId {
    pub fn as_str(self) -> &'static str {
        match self {
            TokenizerId::Gpt2 => "gpt2",
            TokenizerId::Whitespace => "whitespace",
        }
    }
}

impl FromStr for TokenizerId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gpt2" => Ok(TokenizerId::Gpt2),
            "whitespace" => Ok(TokenizerId::Whitespace),
            other => Err(Error::Config(format!("unknown tokenizer `{other}`"))),
        }
    }
}

/// A scorer endpoint. Implementations must preserve input order.
#[async_trait]
pub trait Scorer: Send + Sync {
    async fn sentiment(&self, texts: &[String]) -> Result<Vec<SentimentScore>>;

    async fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>>;

    async fn tokenize(&self, texts: &[String], tokenizer: TokenizerId) -> Result<Vec<usize>>;

    /// Human-readable endpoint description recorded in run manifests.
    fn descriptor(&self) -> String;
}

#[async_trait]
impl<S: Scorer + ?Sized> Scorer for Arc<S> {
    async fn sentiment(&self, texts: &[String]) -> Result<Vec<SentimentScore>> {
        (**self).sentiment(texts).await
    }

    async fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        (**self).embed(texts).await
    }

    async fn tokenize(&self, texts: &[String], tokenizer: TokenizerId) -> Result<Vec<usize>> {
        (**self).tokenize(texts, tokenizer).await
    }

    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
}

fn require_texts(texts: &[String]) -> Result<()> {
    if texts.is_empty() {
        Err(Error::Argument("scorer called with an empty batch".into()))
    } else {
        Ok(())
    }
}

/// Sentiment for a non-empty batch. Empty strings score uniform without a round trip.
pub async fn sentiment(texts: &[String], scorer: &dyn Scorer) -> Result<Vec<SentimentScore>> {
    require_texts(texts)?;
    let wanted: Vec<String> = texts.iter().filter(|t| !t.is_empty()).cloned().collect();
    let mut scored = if wanted.is_empty() {
        Vec::new()
    } else {
        scorer.sentiment(&wanted).await?
    }
    .into_iter();
    if scored.len() != wanted.len() {
        return Err(Error::Protocol {
            endpoint: scorer.descriptor(),
            message: format!("{} scores for {} texts", scored.len(), wanted.len()),
        });
    }
    Ok(texts
        .iter()
        .map(|t| {
            if t.is_empty() {
                SentimentScore::uniform()
            } else {
                scored.next().expect("length checked")
            }
        })
        .collect())
}

/// Embeddings for a non-empty batch; all vectors must share one dimension.
pub async fn embed(texts: &[String], scorer: &dyn Scorer) -> Result<Vec<Embedding>> {
    require_texts(texts)?;
    let vectors = scorer.embed(texts).await?;
    if vectors.len() != texts.len() {
        return Err(Error::Protocol {
            endpoint: scorer.descriptor(),
            message: format!("{} vectors for {} texts", vectors.len(), texts.len()),
        });
    }
    if let Some(first) = vectors.first() {
        if let Some(bad) = vectors.iter().find(|v| v.dim() != first.dim()) {
            return Err(Error::Protocol {
                endpoint: scorer.descriptor(),
                message: format!("mixed embedding dimensions {} and {}", first.dim(), bad.dim()),
            });
        }
    }
    Ok(vectors)
}

/// Token counts. `whitespace` is computed locally; `gpt2` goes to the scorer.
pub async fn token_count(texts: &[String], scorer: Option<&dyn Scorer>, tokenizer_id: &str) -> Result<Vec<usize>> {
    match tokenizer_id.parse::<TokenizerId>()? {
        TokenizerId::Whitespace => Ok(texts.iter().map(|t| t.split_whitespace().count()).collect()),
        TokenizerId::Gpt2 => {
            let scorer = scorer.ok_or_else(|| {
                Error::Config("the gpt2 tokenizer needs a scorer endpoint".into())
            })?;
            if texts.is_empty() {
                return Ok(Vec::new());
            }
            let counts = scorer.tokenize(texts, TokenizerId::Gpt2).await?;
            if counts.len() != texts.len() {
                return Err(Error::Protocol {
                    endpoint: scorer.descriptor(),
                    message: format!("{} counts for {} texts", counts.len(), texts.len()),
                });
            }
            Ok(counts)
        }
    }
}
