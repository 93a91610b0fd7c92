//! In-process scorer with an analytically known output, used by the test suite
//! and by `--scorer stub`.

use std::collections::HashMap;

use async_trait::async_trait;

use crate::error::{Error, Result};
use crate::seed::{derive_seed, fnv1a};
use crate::types::{Embedding, ExpressionLabel, SentimentScore};

use super::{Scorer, TokenizerId};

/// Dimension of the hashed bag-of-words embedding.
pub const STUB_EMBED_DIM: usize = 16;

/// Token standing in for an empty text so its embedding has nonzero norm.
const EMPTY_TOKEN: &str = "<empty>";

const POSITIVE: &[(&str, f64)] = &[
    ("love", 1.5), ("loved", 1.5), ("wonderful", 1.5), ("happy", 1.0), ("joy", 1.0),
    ("great", 1.0), ("excellent", 1.5), ("amazing", 1.5), ("beautiful", 1.0), ("delightful", 1.0),
    ("heartfelt", 1.0), ("compliment", 1.0), ("gift", 1.0), ("grateful", 1.0), ("thankful", 1.0),
    ("brilliant", 1.0), ("fantastic", 1.5), ("lovely", 1.0), ("cheerful", 1.0), ("pleasant", 1.0),
    ("proud", 1.0), ("perfect", 1.0), ("success", 1.0), ("won", 1.0), ("celebrate", 1.0),
    ("smile", 1.0), ("smiled", 1.0), ("laugh", 1.0), ("kind", 1.0), ("warm", 1.0),
    ("bright", 1.0), ("hope", 1.0), ("excited", 1.0), ("awesome", 1.5), ("best", 1.0),
    ("glad", 1.0), ("enjoy", 1.0), ("enjoyed", 1.0), ("peaceful", 1.0), ("praise", 1.0),
];

const NEGATIVE: &[(&str, f64)] = &[
    ("terrible", 1.5), ("awful", 1.5), ("hate", 1.5), ("hated", 1.5), ("sad", 1.0),
    ("angry", 1.0), ("horrible", 1.5), ("bad", 1.0), ("worst", 1.5), ("lost", 1.0),
    ("missed", 1.0), ("broken", 1.0), ("broke", 1.0), ("fail", 1.0), ("failed", 1.0),
    ("failure", 1.0), ("pain", 1.0), ("painful", 1.0), ("cry", 1.0), ("cried", 1.0),
    ("afraid", 1.0), ("fear", 1.0), ("scared", 1.0), ("lonely", 1.0), ("miserable", 1.5),
    ("disaster", 1.5), ("ugly", 1.0), ("rude", 1.0), ("annoyed", 1.0), ("upset", 1.0),
    ("tired", 1.0), ("sick", 1.0), ("hurt", 1.0), ("worried", 1.0), ("stressed", 1.0),
    ("disappointed", 1.0), ("furious", 1.5), ("gloomy", 1.0), ("grief", 1.0), ("regret", 1.0),
];

/// Lowercased word tokens; apostrophes stay inside words.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Lexicon polarity of a single lowercased token.
pub fn lexicon_entry(token: &str) -> Option<(ExpressionLabel, f64)> {
    POSITIVE
        .iter()
        .find(|(w, _)| *w == token)
        .map(|(_, wt)| (ExpressionLabel::Positive, *wt))
        .or_else(|| {
            NEGATIVE
                .iter()
                .find(|(w, _)| *w == token)
                .map(|(_, wt)| (ExpressionLabel::Negative, *wt))
        })
}

/// Tokens of `text` that carry lexicon mass, in order of appearance.
pub fn charged_tokens(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| lexicon_entry(t).is_some())
        .collect()
}

pub fn lexicon(label: ExpressionLabel) -> &'static [(&'static str, f64)] {
    match label {
        ExpressionLabel::Positive => POSITIVE,
        ExpressionLabel::Negative => NEGATIVE,
        ExpressionLabel::Neutral => &[],
    }
}

/// Multiplicative per-class noise, `exp(amplitude · u)` with `u` uniform on [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreNoise {
    pub amplitude: f64,
    pub seed: u64,
}

/// Lexicon sentiment, hashed embeddings and a frozen GPT-2 count table.
///
/// Sentiment masses start from a prior of 1.0 per class; each positive (negative)
/// lexicon hit adds its weight to the positive (negative) mass. No hits therefore
/// yields the uniform score, whose argmax resolves to neutral.
#[derive(Debug, Clone)]
pub struct StubScorer {
    noise: Option<ScoreNoise>,
    gpt2_counts: HashMap<String, usize>,
}

impl Default for StubScorer {
    fn default() -> Self {
        Self::new()
    }
}

impl StubScorer {
    pub fn new() -> Self {
        let gpt2_counts: HashMap<String, usize> =
            serde_json::from_str(include_str!("../../fixtures/gpt2_counts.json"))
                .expect("frozen gpt2 table parses");
        StubScorer {
            noise: None,
            gpt2_counts,
        }
    }

    pub fn with_noise(mut self, amplitude: f64, seed: u64) -> Self {
        self.noise = Some(ScoreNoise { amplitude, seed });
        self
    }

    pub fn score_text(&self, text: &str) -> SentimentScore {
        let mut tokens = tokenize(text);
        if tokens.is_empty() {
            return SentimentScore::uniform();
        }
        let mut masses = [1.0_f64; 3];
        for t in &tokens {
            if let Some((label, weight)) = lexicon_entry(t) {
                masses[label.index()] += weight;
            }
        }
        if let Some(noise) = self.noise {
            tokens.sort_unstable();
            let key = fnv1a(tokens.join(" ").as_bytes());
            for (class, mass) in masses.iter_mut().enumerate() {
                let bits = derive_seed(noise.seed, &[key, class as u64]);
                let u = (bits >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
                *mass *= (noise.amplitude * u).exp();
            }
        }
        SentimentScore::from_masses(masses).expect("masses are positive")
    }

    pub fn embed_text(&self, text: &str) -> Embedding {
        let mut tokens = tokenize(text);
        if tokens.is_empty() {
            tokens.push(EMPTY_TOKEN.to_string());
        }
        let mut v = vec![0.0_f64; STUB_EMBED_DIM];
        for t in &tokens {
            v[(fnv1a(t.as_bytes()) % STUB_EMBED_DIM as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        Embedding::new(v.into_iter().map(|x| x / norm).collect()).expect("nonzero by construction")
    }

    pub fn gpt2_count(&self, text: &str) -> Result<usize> {
        self.gpt2_counts.get(text).copied().ok_or_else(|| Error::Protocol {
            endpoint: "stub".into(),
            message: format!("text not in the frozen gpt2 count table: {text:?}"),
        })
    }
}

#[async_trait]
impl Scorer for StubScorer {
    async fn sentiment(&self, texts: &[String]) -> Result<Vec<SentimentScore>> {
        Ok(texts.iter().map(|t| self.score_text(t)).collect())
    }

    async fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }

    async fn tokenize(&self, texts: &[String], tokenizer: TokenizerId) -> Result<Vec<usize>> {
        match tokenizer {
            TokenizerId::Whitespace => Ok(texts.iter().map(|t| t.split_whitespace().count()).collect()),
            TokenizerId::Gpt2 => texts.iter().map(|t| self.gpt2_count(t)).collect(),
        }
    }

    fn descriptor(&self) -> String {
        match self.noise {
            None => "stub".into(),
            Some(n) => format!("stub+noise(amplitude={},seed={})", n.amplitude, n.seed),
        }
    }
}
