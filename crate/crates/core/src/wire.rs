//! JSON bodies of the scorer and generation wire protocols.

use serde::{Deserialize, Serialize};

pub const SENTIMENT_PATH: &str = "/v1/sentiment";
pub const EMBED_PATH: &str = "/v1/embed";
pub const TOKENIZE_PATH: &str = "/v1/tokenize";
pub const COMPLETE_PATH: &str = "/v1/complete";
pub const COMPLETIONS_PATH: &str = "/v1/completions";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextsRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SentimentResponse {
    /// One `[negative, neutral, positive]` row per input text.
    pub probs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
    pub dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenizeRequest {
    pub texts: Vec<String>,
    pub tokenizer: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenizeResponse {
    pub counts: Vec<u64>,
}

/// Native generation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompleteRequest {
    pub prompt: String,
    pub top_p: f64,
    pub top_k: u32,
    pub repetition_penalty: f64,
    pub max_tokens: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompleteResponse {
    pub text: String,
}

/// Request in the widely implemented completions dialect.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionsRequest {
    pub model: String,
    pub prompt: String,
    pub max_tokens: u32,
    pub top_p: f64,
    pub top_k: u32,
    pub repetition_penalty: f64,
    pub seed: u64,
    pub n: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionsResponse {
    pub choices: Vec<CompletionChoice>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionChoice {
    pub text: String,
}

/// Error body returned with 4xx statuses. `param` names a rejected request field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<String>,
}
