//! Domain types shared by every stage of the harness.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the simplex sum of a [`SentimentScore`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// The three-class expression space. The integer encoding is fixed:
/// negative = 0, neutral = 1, positive = 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpressionLabel {
    Negative = 0,
    Neutral = 1,
    Positive = 2,
}

impl ExpressionLabel {
    pub const ALL: [ExpressionLabel; 3] = [
        ExpressionLabel::Negative,
        ExpressionLabel::Neutral,
        ExpressionLabel::Positive,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExpressionLabel::Negative => "negative",
            ExpressionLabel::Neutral => "neutral",
            ExpressionLabel::Positive => "positive",
        }
    }

    /// Labels that carry sentiment, i.e. the ones expression leakage is averaged over.
    pub fn is_charged(self) -> bool {
        self != ExpressionLabel::Neutral
    }
}

impl fmt::Display for ExpressionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExpressionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "negative" | "neg" => Ok(ExpressionLabel::Negative),
            "neutral" | "neu" => Ok(ExpressionLabel::Neutral),
            "positive" | "pos" => Ok(ExpressionLabel::Positive),
            other => Err(Error::Argument(format!("unknown expression label `{other}`"))),
        }
    }
}

/// A probability vector over [`ExpressionLabel`], ordered (negative, neutral, positive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct SentimentScore([f64; 3]);

impl SentimentScore {
    pub fn new(probs: [f64; 3]) -> Result<Self> {
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0) {
            return Err(Error::Argument(format!(
                "sentiment component {bad} is outside [0, 1]"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::Argument(format!(
                "sentiment components sum to {sum}, expected 1"
            )));
        }
        Ok(SentimentScore(probs))
    }

    pub fn uniform() -> Self {
        SentimentScore([1.0 / 3.0; 3])
    }

    /// Normalizes non-negative masses onto the simplex.
    pub fn from_masses(masses: [f64; 3]) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total.is_finite() && total > 0.0) || masses.iter().any(|m| *m < 0.0) {
            return Err(Error::Argument(format!(
                "cannot normalize sentiment masses {masses:?}"
            )));
        }
        Self::new(masses.map(|m| m / total))
    }

    pub fn probs(&self) -> [f64; 3] {
        self.0
    }

    pub fn get(&self, label: ExpressionLabel) -> f64 {
        self.0[label.index()]
    }

    /// Index of the largest component. Any tie for the maximum resolves to neutral.
    pub fn argmax(&self) -> ExpressionLabel {
        let max = self.0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let winners: Vec<_> = ExpressionLabel::ALL
            .into_iter()
            .filter(|l| self.get(*l) == max)
            .collect();
        match winners.as_slice() {
            [single] => *single,
            _ => ExpressionLabel::Neutral,
        }
    }
}

impl TryFrom<[f64; 3]> for SentimentScore {
    type Error = Error;

    fn try_from(value: [f64; 3]) -> Result<Self> {
        SentimentScore::new(value)
    }
}

impl From<SentimentScore> for [f64; 3] {
    fn from(value: SentimentScore) -> Self {
        value.0
    }
}

/// A sentence embedding with strictly positive norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(vector: Vec<f64>) -> Result<Self> {
        if vector.is_empty() {
            return Err(Error::Argument("embedding has zero dimensions".into()));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::Argument("embedding has non-finite components".into()));
        }
        if vector.iter().all(|x| *x == 0.0) {
            return Err(Error::Argument("embedding is the zero vector".into()));
        }
        Ok(Embedding(vector))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Embedding::new(self.0.iter().map(|x| x * factor).collect())
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Embedding::new(value)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(value: Embedding) -> Self {
        value.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InstructionMode {
    #[default]
    CompleteSentence,
    CompleteSentenceWithDisregard,
    Bare,
}

impl FromStr for InstructionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complete" | "complete_sentence" => Ok(InstructionMode::CompleteSentence),
            "disregard" | "complete_sentence_with_disregard" => {
                Ok(InstructionMode::CompleteSentenceWithDisregard)
            }
            "bare" => Ok(InstructionMode::Bare),
            other => Err(Error::Config(format!("unknown instruction mode `{other}`"))),
        }
    }
}

/// Decoding parameters for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub top_p: f64,
    pub top_k: u32,
    pub repetition_penalty: f64,
    pub max_new_tokens: u32,
    pub samples_per_prompt: u32,
    pub seed: u64,
    pub instruction_mode: InstructionMode,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            top_p: 0.9,
            top_k: 50,
            repetition_penalty: 1.1,
            max_new_tokens: 128,
            samples_per_prompt: 10,
            seed: 0,
            instruction_mode: InstructionMode::CompleteSentence,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config(format!("top_p must be in (0, 1], got {}", self.top_p)));
        }
        if !(self.repetition_penalty >= 1.0 && self.repetition_penalty.is_finite()) {
            return Err(Error::Config(format!(
                "repetition_penalty must be >= 1, got {}",
                self.repetition_penalty
            )));
        }
        if self.max_new_tokens < 1 {
            return Err(Error::Config("max_new_tokens must be >= 1".into()));
        }
        if self.samples_per_prompt < 1 {
            return Err(Error::Config("samples_per_prompt must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Control,
    Test,
}

/// Identifies one prompt of a sample: the control stem or the test with a given label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PromptSlot {
    Control,
    Test(ExpressionLabel),
}

impl PromptSlot {
    pub const ALL: [PromptSlot; 4] = [
        PromptSlot::Control,
        PromptSlot::Test(ExpressionLabel::Negative),
        PromptSlot::Test(ExpressionLabel::Neutral),
        PromptSlot::Test(ExpressionLabel::Positive),
    ];

    pub fn kind(self) -> PromptKind {
        match self {
            PromptSlot::Control => PromptKind::Control,
            PromptSlot::Test(_) => PromptKind::Test,
        }
    }

    pub fn label(self) -> Option<ExpressionLabel> {
        match self {
            PromptSlot::Control => None,
            PromptSlot::Test(l) => Some(l),
        }
    }
}

impl fmt::Display for PromptSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PromptSlot::Control => f.write_str("control"),
            PromptSlot::Test(l) => write!(f, "test:{l}"),
        }
    }
}

/// One model output for one prompt and sample index, before and after cleaning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGenerationRecord")]
pub struct GenerationRecord {
    pub sample_id: String,
    pub prompt_kind: PromptKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<ExpressionLabel>,
    pub sample_index: u32,
    pub seed: u64,
    pub raw_text: String,
    pub cleaned_text: String,
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sentiment: Option<SentimentScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Embedding>,
}

#[derive(Deserialize)]
struct RawGenerationRecord {
    sample_id: String,
    prompt_kind: PromptKind,
    #[serde(default)]
    label: Option<ExpressionLabel>,
    sample_index: u32,
    seed: u64,
    raw_text: String,
    cleaned_text: String,
    degenerate: bool,
    #[serde(default)]
    sentiment: Option<SentimentScore>,
    #[serde(default)]
    embedding: Option<Embedding>,
}

impl TryFrom<RawGenerationRecord> for GenerationRecord {
    type Error = Error;

    fn try_from(r: RawGenerationRecord) -> Result<Self> {
        if (r.prompt_kind == PromptKind::Test) != r.label.is_some() {
            return Err(Error::Integrity(format!(
                "record {}#{}: label must be present exactly for test prompts",
                r.sample_id, r.sample_index
            )));
        }
        Ok(GenerationRecord {
            sample_id: r.sample_id,
            prompt_kind: r.prompt_kind,
            label: r.label,
            sample_index: r.sample_index,
            seed: r.seed,
            raw_text: r.raw_text,
            cleaned_text: r.cleaned_text,
            degenerate: r.degenerate,
            sentiment: r.sentiment,
            embedding: r.embedding,
        })
    }
}

impl GenerationRecord {
    pub fn slot(&self) -> PromptSlot {
        match self.label {
            Some(l) => PromptSlot::Test(l),
            None => PromptSlot::Control,
        }
    }

    /// Canonical ordering key: (sample_id, prompt_kind, label, sample_index).
    pub fn sort_key(&self) -> (&str, PromptKind, Option<ExpressionLabel>, u32) {
        (&self.sample_id, self.prompt_kind, self.label, self.sample_index)
    }
}

/// Per (sample, injected label) leakage decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageOutcome {
    pub sample_id: String,
    pub label: ExpressionLabel,
    pub el: u8,
    pub paired_diff: f64,
    pub sem_l: f64,
    pub sim_test: f64,
    pub sim_ctl: f64,
    /// Leakage decision of generation i of the test prompt against generation i of the control.
    pub per_generation_el: Vec<u8>,
}
