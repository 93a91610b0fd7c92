//! Expression-leakage benchmarking harness.
//!
//! Measures whether sentimentally charged but irrelevant context injected before a
//! sentence stem shifts the sentiment of a language model's continuation. The crate
//! covers dataset generation, prompting and cleaning, scoring over a small HTTP wire
//! protocol, leakage metrics, signed-rank testing and result reporting.

pub mod cli;
pub mod conformance;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod genpipe;
mod http;
pub mod manifest;
pub mod metrics;
pub mod report;
pub mod retry;
pub mod scoring;
pub mod seed;
pub mod serve;
pub mod stats;
pub mod types;
pub mod wire;

pub use dataset::{Dataset, DatasetKind, PromptSample};
pub use error::{Error, Result};
pub use types::{ExpressionLabel, GenerationConfig, GenerationRecord, InstructionMode, LeakageOutcome, SentimentScore};
