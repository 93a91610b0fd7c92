use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetKind};
use crate::error::{Error, Result};
use crate::genpipe::{COMPLETE_INSTRUCTION, DISREGARD_INSTRUCTION, SPLITTER_VERSION};
use crate::types::{GenerationConfig, InstructionMode};

pub const HARNESS_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub harness_version: String,
    pub dataset_name: String,
    pub dataset_kind: DatasetKind,
    /// SHA-256 of the canonical dataset JSON.
    pub dataset_hash: String,
    pub n_samples: usize,
    pub generation: GenerationConfig,
    pub backend: String,
    pub scorer: String,
    pub splitter_version: String,
    /// Instruction text prepended to every prompt in this run.
    pub instruction: String,
    pub created_at: String,
}

impl RunManifest {
    pub fn new(dataset: &Dataset, generation: &GenerationConfig, backend: String, scorer: String) -> Self {
        let instruction = match generation.instruction_mode {
            InstructionMode::CompleteSentence => COMPLETE_INSTRUCTION.to_string(),
            InstructionMode::CompleteSentenceWithDisregard => {
                format!("{DISREGARD_INSTRUCTION}\n{COMPLETE_INSTRUCTION}")
            }
            InstructionMode::Bare => String::new(),
        };
        RunManifest {
            harness_version: HARNESS_VERSION.to_string(),
            dataset_name: dataset.name().to_string(),
            dataset_kind: dataset.kind(),
            dataset_hash: dataset.content_hash(),
            n_samples: dataset.len(),
            generation: generation.clone(),
            backend,
            scorer,
            splitter_version: SPLITTER_VERSION.to_string(),
            instruction,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    /// Whether `other` describes the same run, ignoring when it was created.
    pub fn same_run(&self, other: &RunManifest) -> bool {
        RunManifest { created_at: String::new(), ..self.clone() }
            == RunManifest { created_at: String::new(), ..other.clone() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
