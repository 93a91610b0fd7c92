use std::sync::OnceLock;

use async_trait::async_trait;

use crate::error::{Error, Result};
use crate::http::{join_url, post_json};
use crate::retry::RetryPolicy;
use crate::types::{Embedding, SentimentScore};
use crate::wire::{
    EmbedResponse, SentimentResponse, TextsRequest, TokenizeRequest, TokenizeResponse, EMBED_PATH,
    SENTIMENT_PATH, TOKENIZE_PATH,
};

use super::{Scorer, TokenizerId};

/// Client for the scorer wire protocol.
#[derive(Debug)]
pub struct HttpScorer {
    base_url: String,
    client: reqwest::Client,
    retry: RetryPolicy,
    /// Embedding dimension fixed by the first response of this client's lifetime.
    dim: OnceLock<usize>,
}

impl HttpScorer {
    pub fn new(base_url: impl Into<String>, retry: RetryPolicy) -> Self {
        HttpScorer {
            base_url: base_url.into(),
            client: reqwest::Client::new(),
            retry,
            dim: OnceLock::new(),
        }
    }

    fn protocol(&self, path: &str, message: impl Into<String>) -> Error {
        Error::Protocol {
            endpoint: join_url(&self.base_url, path),
            message: message.into(),
        }
    }
}

#[async_trait]
impl Scorer for HttpScorer {
    async fn sentiment(&self, texts: &[String]) -> Result<Vec<SentimentScore>> {
        let url = join_url(&self.base_url, SENTIMENT_PATH);
        let resp: SentimentResponse = post_json(
            &self.client,
            &url,
            &TextsRequest { texts: texts.to_vec() },
            &self.retry,
        )
        .await?;
        if resp.probs.len() != texts.len() {
            return Err(self.protocol(
                SENTIMENT_PATH,
                format!("{} rows for {} texts", resp.probs.len(), texts.len()),
            ));
        }
        resp.probs
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                let arr: [f64; 3] = row.as_slice().try_into().map_err(|_| {
                    self.protocol(SENTIMENT_PATH, format!("row {i} has {} entries, expected 3", row.len()))
                })?;
                SentimentScore::new(arr)
                    .map_err(|e| self.protocol(SENTIMENT_PATH, format!("row {i}: {e}")))
            })
            .collect()
    }

    async fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        let url = join_url(&self.base_url, EMBED_PATH);
        let resp: EmbedResponse = post_json(
            &self.client,
            &url,
            &TextsRequest { texts: texts.to_vec() },
            &self.retry,
        )
        .await?;
        if resp.vectors.len() != texts.len() {
            return Err(self.protocol(
                EMBED_PATH,
                format!("{} vectors for {} texts", resp.vectors.len(), texts.len()),
            ));
        }
        let run_dim = *self.dim.get_or_init(|| resp.dim);
        if resp.dim != run_dim {
            return Err(self.protocol(
                EMBED_PATH,
                format!("dimension drifted from {run_dim} to {}", resp.dim),
            ));
        }
        resp.vectors
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                if v.len() != run_dim {
                    return Err(self.protocol(
                        EMBED_PATH,
                        format!("vector {i} has dimension {}, expected {run_dim}", v.len()),
                    ));
                }
                Embedding::new(v).map_err(|e| self.protocol(EMBED_PATH, format!("vector {i}: {e}")))
            })
            .collect()
    }

    async fn tokenize(&self, texts: &[String], tokenizer: TokenizerId) -> Result<Vec<usize>> {
        let url = join_url(&self.base_url, TOKENIZE_PATH);
        let resp: TokenizeResponse = post_json(
            &self.client,
            &url,
            &TokenizeRequest {
                texts: texts.to_vec(),
                tokenizer: tokenizer.as_str().to_string(),
            },
            &self.retry,
        )
        .await?;
        if resp.counts.len() != texts.len() {
            return Err(self.protocol(
                TOKENIZE_PATH,
                format!("{} counts for {} texts", resp.counts.len(), texts.len()),
            ));
        }
        Ok(resp.counts.into_iter().map(|c| c as usize).collect())
    }

    fn descriptor(&self) -> String {
        self.base_url.clone()
    }
}
