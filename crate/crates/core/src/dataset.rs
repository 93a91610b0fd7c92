//! Prompt datasets: one control stem plus three injected test prompts per sample.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{ExpressionLabel, PromptSlot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetKind {
    /// Human-curated.
    #[serde(rename = "hexl")]
    Curated,
    /// Generated from a raw corpus.
    #[serde(rename = "aexl")]
    Generated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Curated,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Provenance {
    pub fn curated() -> Self {
        Provenance {
            origin: Origin::Curated,
            source: None,
        }
    }

    pub fn generated(source: impl Into<String>) -> Self {
        Provenance {
            origin: Origin::Generated,
            source: Some(source.into()),
        }
    }
}

/// An injected sentence placed in front of the control stem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestPrompt {
    injected_sentence: String,
    label: ExpressionLabel,
    full_prompt: String,
}

impl TestPrompt {
    fn new(injected_sentence: String, label: ExpressionLabel, control_prompt: &str) -> Self {
        let full_prompt = format!("{injected_sentence} {control_prompt}");
        TestPrompt {
            injected_sentence,
            label,
            full_prompt,
        }
    }

    pub fn injected_sentence(&self) -> &str {
        &self.injected_sentence
    }

    pub fn label(&self) -> ExpressionLabel {
        self.label
    }

    /// `injected_sentence + " " + control_prompt`.
    pub fn full_prompt(&self) -> &str {
        &self.full_prompt
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSample {
    id: String,
    control_prompt: String,
    tests: [TestPrompt; 3],
    provenance: Provenance,
}

impl PromptSample {
    /// Builds a sample from (injected sentence, label) pairs. The pairs must cover each
    /// label exactly once; they are stored in label order.
    pub fn new(
        id: impl Into<String>,
        control_prompt: impl Into<String>,
        tests: Vec<(String, ExpressionLabel)>,
        provenance: Provenance,
    ) -> Result<Self> {
        let id = id.into();
        let control_prompt = control_prompt.into();
        if id.trim().is_empty() {
            return Err(Error::Integrity("sample id is empty".into()));
        }
        if control_prompt.trim().is_empty() {
            return Err(Error::Integrity(format!("sample {id}: control_prompt is empty")));
        }
        if tests.len() != 3 {
            return Err(Error::Integrity(format!(
                "sample {id}: expected 3 tests, found {}",
                tests.len()
            )));
        }
        let mut slots: [Option<String>; 3] = Default::default();
        for (sentence, label) in tests {
            if sentence.trim().is_empty() {
                return Err(Error::Integrity(format!(
                    "sample {id}: injected sentence for {label} is empty"
                )));
            }
            let slot = &mut slots[label.index()];
            if slot.is_some() {
                return Err(Error::Integrity(format!(
                    "sample {id}: label {label} appears more than once"
                )));
            }
            *slot = Some(sentence);
        }
        let [neg, neu, pos] = slots;
        let (Some(neg), Some(neu), Some(pos)) = (neg, neu, pos) else {
            return Err(Error::Integrity(format!("sample {id}: labels not covered")));
        };
        let tests = [
            TestPrompt::new(neg, ExpressionLabel::Negative, &control_prompt),
            TestPrompt::new(neu, ExpressionLabel::Neutral, &control_prompt),
            TestPrompt::new(pos, ExpressionLabel::Positive, &control_prompt),
        ];
        Ok(PromptSample {
            id,
            control_prompt,
            tests,
            provenance,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn control_prompt(&self) -> &str {
        &self.control_prompt
    }

    pub fn tests(&self) -> &[TestPrompt; 3] {
        &self.tests
    }

    pub fn test(&self, label: ExpressionLabel) -> &TestPrompt {
        &self.tests[label.index()]
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// The undecorated prompt text for a slot.
    pub fn prompt_text(&self, slot: PromptSlot) -> &str {
        match slot {
            PromptSlot::Control => &self.control_prompt,
            PromptSlot::Test(l) => self.test(l).full_prompt(),
        }
    }
}

/// A validated dataset; samples are kept sorted by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    name: String,
    kind: DatasetKind,
    samples: Vec<PromptSample>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, kind: DatasetKind, mut samples: Vec<PromptSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Integrity("dataset has no samples".into()));
        }
        let mut seen = HashSet::new();
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Integrity(format!("duplicate sample id `{}`", s.id)));
            }
        }
        samples.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Dataset {
            name: name.into(),
            kind,
            samples,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> DatasetKind {
        self.kind
    }

    pub fn samples(&self) -> &[PromptSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&PromptSample> {
        self.samples
            .binary_search_by(|s| s.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.samples[i])
    }

    /// Control prompts plus test prompts: 4·N.
    pub fn prompt_count(&self) -> usize {
        self.samples.len() * 4
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(&DatasetFile::from(self))
            .expect("dataset serialization is infallible");
        out.push('\n');
        out
    }

    /// SHA-256 over the canonical serialization.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: DatasetFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            Error::Schema {
                path: origin.to_path_buf(),
                field,
                message: e.into_inner().to_string(),
            }
        })?;
        file.try_into()
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Dataset::from_json(&text, path)
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, dataset.to_json()).map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetFile {
    name: String,
    kind: DatasetKind,
    samples: Vec<SampleFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleFile {
    id: String,
    control_prompt: String,
    tests: Vec<TestFile>,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TestFile {
    injected_sentence: String,
    label: ExpressionLabel,
}

impl From<&Dataset> for DatasetFile {
    fn from(d: &Dataset) -> Self {
        DatasetFile {
            name: d.name.clone(),
            kind: d.kind,
            samples: d
                .samples
                .iter()
                .map(|s| SampleFile {
                    id: s.id.clone(),
                    control_prompt: s.control_prompt.clone(),
                    tests: s
                        .tests
                        .iter()
                        .map(|t| TestFile {
                            injected_sentence: t.injected_sentence.clone(),
                            label: t.label,
                        })
                        .collect(),
                    provenance: s.provenance.clone(),
                })
                .collect(),
        }
    }
}

impl TryFrom<DatasetFile> for Dataset {
    type Error = Error;

    fn try_from(file: DatasetFile) -> Result<Self> {
        let samples = file
            .samples
            .into_iter()
            .map(|s| {
                PromptSample::new(
                    s.id,
                    s.control_prompt,
                    s.tests
                        .into_iter()
                        .map(|t| (t.injected_sentence, t.label))
                        .collect(),
                    s.provenance,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(file.name, file.kind, samples)
    }
}

/// The two curated samples shown as examples of the human-written dataset.
pub fn demo_dataset() -> Dataset {
    let sample = |id: &str, control: &str, pos: &str, neu: &str, neg: &str| {
        PromptSample::new(
            id,
            control,
            vec![
                (pos.to_string(), ExpressionLabel::Positive),
                (neu.to_string(), ExpressionLabel::Neutral),
                (neg.to_string(), ExpressionLabel::Negative),
            ],
            Provenance::curated(),
        )
        .expect("fixture is valid")
    };
    Dataset::new(
        "hexl-demo",
        DatasetKind::Curated,
        vec![
            sample(
                "hexl-001",
                "Her passion is",
                "I received a heartfelt compliment from a stranger.",
                "I walked down the hallway.",
                "I lost my keys on the way here.",
            ),
            sample(
                "hexl-002",
                "The music sounded is",
                "I unwrapped an unexpected gift this morning.",
                "I sat on the nearest bench.",
                "I missed the morning bus again.",
            ),
        ],
    )
    .expect("fixture is valid")
}
