//! Drives a backend over a dataset with a JSON-lines checkpoint.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use futures::stream::{self, StreamExt};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seed::sample_seed;
use crate::types::{GenerationConfig, GenerationRecord, PromptSlot};
use crate::wire::CompleteRequest;

use super::backend::GenerationBackend;
use super::clean::clean_generation;
use super::prompt::build_prompt;

/// `samples_per_prompt` completions, requested one after another with derived seeds.
pub async fn generate(prompt: &str, cfg: &GenerationConfig, backend: &dyn GenerationBackend) -> Result<Vec<String>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(cfg.samples_per_prompt as usize);
    for i in 0..cfg.samples_per_prompt {
        let request = CompleteRequest {
            prompt: prompt.to_string(),
            top_p: cfg.top_p,
            top_k: cfg.top_k,
            repetition_penalty: cfg.repetition_penalty,
            max_tokens: cfg.max_new_tokens,
            seed: sample_seed(cfg.seed, i),
        };
        out.push(backend.complete(&request).await?);
    }
    Ok(out)
}

/// Reads a checkpoint. A torn final line (interrupted write) is ignored.
pub fn read_checkpoint(path: &Path) -> Result<Vec<GenerationRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    let mut records = Vec::with_capacity(lines.len());
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<GenerationRecord>(line) {
            Ok(r) => records.push(r),
            Err(e) if i == last => {
                tracing::warn!(path = %path.display(), "ignoring torn checkpoint line: {e}");
            }
            Err(e) => {
                return Err(Error::Schema {
                    path: path.to_path_buf(),
                    field: format!("line {}", i + 1),
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(records)
}

/// Rewrites the checkpoint atomically in canonical record order.
pub fn write_checkpoint(path: &Path, records: &[GenerationRecord]) -> Result<()> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        for r in records {
            let line = serde_json::to_string(r).expect("records serialize");
            writeln!(w, "{line}").map_err(|e| Error::io(&tmp, e))?;
        }
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Job {
    sample_id: String,
    slot: PromptSlot,
    prompt: String,
}

#[derive(Debug, Clone)]
pub struct GenerationRun {
    /// All records, canonically ordered.
    pub records: Vec<GenerationRecord>,
    /// Prompts taken from an existing checkpoint instead of the backend.
    pub resumed_prompts: usize,
    pub generated_prompts: usize,
}

/// Generates every prompt of `dataset`, appending each finished prompt to the
/// checkpoint at `checkpoint`. Prompts already complete in the checkpoint are
/// skipped. On failure the checkpoint keeps every finished prompt.
pub async fn run_generation(
    dataset: &Dataset,
    cfg: &GenerationConfig,
    backend: &dyn GenerationBackend,
    checkpoint: &Path,
    max_in_flight: usize,
) -> Result<GenerationRun> {
    cfg.validate()?;
    let spp = cfg.samples_per_prompt;
    let existing = read_checkpoint(checkpoint)?;

    let mut by_prompt: HashMap<(String, PromptSlot), Vec<GenerationRecord>> = HashMap::new();
    for r in existing {
        if dataset.get(&r.sample_id).is_some() && r.sample_index < spp && r.seed == sample_seed(cfg.seed, r.sample_index) {
            by_prompt.entry((r.sample_id.clone(), r.slot())).or_default().push(r);
        }
    }
    let mut kept: Vec<GenerationRecord> = Vec::new();
    let mut done: HashSet<(String, PromptSlot)> = HashSet::new();
    for (key, mut recs) in by_prompt {
        recs.sort_by_key(|r| r.sample_index);
        recs.dedup_by_key(|r| r.sample_index);
        if recs.len() == spp as usize {
            done.insert(key);
            kept.extend(recs);
        }
    }
    let resumed_prompts = done.len();

    // Start the checkpoint over with only the complete prompts.
    kept.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    write_checkpoint(checkpoint, &kept)?;

    let jobs: Vec<Job> = dataset
        .samples()
        .iter()
        .flat_map(|s| PromptSlot::ALL.into_iter().map(move |slot| (s, slot)))
        .filter(|(s, slot)| !done.contains(&(s.id().to_string(), *slot)))
        .map(|(s, slot)| Job {
            sample_id: s.id().to_string(),
            slot,
            prompt: build_prompt(s, slot, cfg.instruction_mode),
        })
        .collect();
    let generated_prompts = jobs.len();

    let file = OpenOptions::new()
        .append(true)
        .open(checkpoint)
        .map_err(|e| Error::io(checkpoint, e))?;
    let mut sink = BufWriter::new(file);

    let mut results = stream::iter(jobs)
        .map(|job| async move {
            let texts = generate(&job.prompt, cfg, backend).await?;
            let records: Vec<GenerationRecord> = texts
                .into_iter()
                .enumerate()
                .map(|(i, raw)| {
                    let cleaned = clean_generation(&raw, &job.prompt);
                    GenerationRecord {
                        sample_id: job.sample_id.clone(),
                        prompt_kind: job.slot.kind(),
                        label: job.slot.label(),
                        sample_index: i as u32,
                        seed: sample_seed(cfg.seed, i as u32),
                        raw_text: raw,
                        cleaned_text: cleaned.text,
                        degenerate: cleaned.degenerate,
                        sentiment: None,
                        embedding: None,
                    }
                })
                .collect();
            Ok::<_, Error>(records)
        })
        .buffer_unordered(max_in_flight.max(1));

    let mut all = kept;
    while let Some(batch) = results.next().await {
        let batch = batch?;
        for r in &batch {
            let line = serde_json::to_string(r).expect("records serialize");
            writeln!(sink, "{line}").map_err(|e| Error::io(checkpoint, e))?;
        }
        sink.flush().map_err(|e| Error::io(checkpoint, e))?;
        all.extend(batch);
    }
    drop(sink);

    all.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    write_checkpoint(checkpoint, &all)?;
    Ok(GenerationRun {
        records: all,
        resumed_prompts,
        generated_prompts,
    })
}
