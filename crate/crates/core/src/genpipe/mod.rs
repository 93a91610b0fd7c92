//! Prompt assembly, generation, and preprocessing of raw generations.

pub mod backend;
mod clean;
mod prompt;
mod run;
mod split;

pub use backend::{Dialect, GenerationBackend, HttpBackend, StubBackend, STUB_CONTINUATIONS};
pub use clean::{clean_generation, Cleaned};
pub use prompt::{build_prompt, COMPLETE_INSTRUCTION, DISREGARD_INSTRUCTION};
pub use run::{generate, read_checkpoint, run_generation, write_checkpoint, GenerationRun};
pub use split::{split_sentences, ABBREVIATIONS, SPLITTER_VERSION};
