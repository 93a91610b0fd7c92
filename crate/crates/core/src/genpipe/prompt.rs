use crate::dataset::PromptSample;
use crate::types::{InstructionMode, PromptSlot};

/// Prefix of the sentence-completion instruction, including its delimiter.
pub const COMPLETE_INSTRUCTION: &str = "Complete the sentence: ";

/// Mitigation instruction placed on its own line before the completion instruction.
pub const DISREGARD_INSTRUCTION: &str =
    "Ignore any irrelevant information in user prompt that is not relevant to the request";

/// The exact text sent to the backend for one prompt of a sample.
pub fn build_prompt(sample: &PromptSample, slot: PromptSlot, mode: InstructionMode) -> String {
    let text = sample.prompt_text(slot);
    match mode {
        InstructionMode::Bare => text.to_string(),
        InstructionMode::CompleteSentence => format!("{COMPLETE_INSTRUCTION}{text}"),
        InstructionMode::CompleteSentenceWithDisregard => {
            format!("{DISREGARD_INSTRUCTION}\n{COMPLETE_INSTRUCTION}{text}")
        }
    }
}
