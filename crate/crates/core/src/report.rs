//! End-to-end runs and the result files they produce, plus cross-run comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetKind};
use crate::error::{Error, Result};
use crate::genpipe::{run_generation, GenerationBackend};
use crate::manifest::RunManifest;
use crate::metrics::{evaluate_run, Evaluation, LabelRates};
use crate::scoring::Scorer;
use crate::stats::{csv_error, significance_gate, wilcoxon_one_sided, WilcoxonResult, DEFAULT_ALPHA};
use crate::types::{ExpressionLabel, GenerationConfig, LeakageOutcome};

pub const SCHEMA_VERSION: u32 = 1;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const GENERATIONS_FILE: &str = "generations.jsonl";
pub const SCORED_FILE: &str = "scored_generations.jsonl";
pub const OUTCOMES_JSON: &str = "outcomes.json";
pub const OUTCOMES_CSV: &str = "outcomes.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub generation: GenerationConfig,
    pub max_in_flight: usize,
    /// Texts per scorer request.
    pub batch_size: usize,
    pub alpha: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            generation: GenerationConfig::default(),
            max_in_flight: 8,
            batch_size: 64,
            alpha: DEFAULT_ALPHA,
        }
    }
}

/// The summary file of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub dataset: String,
    pub dataset_kind: DatasetKind,
    pub backend: String,
    pub scorer: String,
    pub mu_el: f64,
    pub mu_l: f64,
    pub per_label: BTreeMap<ExpressionLabel, LabelRates>,
    pub n_samples: usize,
    pub n_pairs: usize,
    pub n_el_pairs: usize,
    pub degenerate_generations: usize,
    /// Absent when every paired difference is zero.
    pub wilcoxon: Option<WilcoxonResult>,
    pub alpha: f64,
    pub significant: bool,
    /// How ambiguous parts of the measurement were resolved.
    pub interpretations: BTreeMap<String, String>,
}

fn interpretations() -> BTreeMap<String, String> {
    [
        ("aggregation", "mean of per-generation probability vectors"),
        ("el_decision", "strict: test probability of the injected label greater than control"),
        ("el_labels", "negative and positive injections"),
        ("l_labels", "negative, neutral and positive injections"),
        ("concept", "the injected sentence"),
        ("similarity", "mean cosine between each generation and the concept"),
        ("l_ties", "0.5"),
        ("paired_diff", "injected-label component of test minus control"),
        ("wilcoxon_zeros", "discarded"),
        ("wilcoxon_ties", "average ranks"),
        ("wilcoxon_method", "exact up to 20 non-zero differences, else normal approximation with continuity correction"),
        ("cleaning", "prompt echo removed, then the first sentence kept"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

pub fn summarize(evaluation: &Evaluation, manifest: &RunManifest, alpha: f64) -> Result<RunSummary> {
    let wilcoxon = match wilcoxon_one_sided(&evaluation.charged_diffs()) {
        Ok(w) => Some(w),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    let s = &evaluation.summary;
    Ok(RunSummary {
        schema_version: SCHEMA_VERSION,
        dataset: manifest.dataset_name.clone(),
        dataset_kind: manifest.dataset_kind,
        backend: manifest.backend.clone(),
        scorer: manifest.scorer.clone(),
        mu_el: s.mu_el,
        mu_l: s.mu_l,
        per_label: s.per_label.clone(),
        n_samples: s.n_samples,
        n_pairs: s.n_pairs,
        n_el_pairs: s.n_el_pairs,
        degenerate_generations: s.degenerate_generations,
        significant: wilcoxon.as_ref().is_some_and(|w| significance_gate(w, alpha)),
        wilcoxon,
        alpha,
        interpretations: interpretations(),
    })
}

/// Pretty JSON with keys sorted at every level.
fn sorted_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable");
    serde_json::to_string_pretty(&v).expect("serializable") + "\n"
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("serializable"));
        out.push('\n');
    }
    write(path, out)
}

fn write_outcomes_csv(path: &Path, outcomes: &[LeakageOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["sample_id", "label", "el", "paired_diff", "sem_l", "sim_test", "sim_ctl"])
        .map_err(|e| csv_error(path, e))?;
    for o in outcomes {
        w.write_record([
            o.sample_id.clone(),
            o.label.to_string(),
            o.el.to_string(),
            o.paired_diff.to_string(),
            o.sem_l.to_string(),
            o.sim_test.to_string(),
            o.sim_ctl.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct RunResults {
    pub summary: RunSummary,
    pub evaluation: Evaluation,
    pub resumed_prompts: usize,
    pub generated_prompts: usize,
}

/// Generates, scores and summarizes `dataset`, writing all result files to `out_dir`.
/// An existing run in `out_dir` with the same manifest is resumed from its checkpoint.
pub async fn cmd_run(
    dataset: &Dataset,
    backend: &dyn GenerationBackend,
    scorer: &dyn Scorer,
    opts: &RunOptions,
    out_dir: &Path,
) -> Result<RunResults> {
    opts.generation.validate()?;
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::Config(format!("alpha must be in (0, 1), got {}", opts.alpha)));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let fresh = RunManifest::new(dataset, &opts.generation, backend.descriptor(), scorer.descriptor());
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let manifest = if manifest_path.exists() {
        let existing = RunManifest::load(&manifest_path)?;
        if !existing.same_run(&fresh) {
            return Err(Error::Config(format!(
                "{} holds a different run; use another output directory",
                out_dir.display()
            )));
        }
        existing
    } else {
        fresh.save(&manifest_path)?;
        fresh
    };

    let run = run_generation(
        dataset,
        &opts.generation,
        backend,
        &out_dir.join(GENERATIONS_FILE),
        opts.max_in_flight,
    )
    .await
    .map_err(|e| e.in_stage("generate"))?;
    tracing::info!(resumed = run.resumed_prompts, generated = run.generated_prompts, "generation done");

    let evaluation = evaluate_run(
        dataset,
        &run.records,
        opts.generation.samples_per_prompt,
        scorer,
        opts.batch_size,
    )
    .await
    .map_err(|e| e.in_stage("score"))?;
    let summary = summarize(&evaluation, &manifest, opts.alpha).map_err(|e| e.in_stage("stats"))?;

    write_jsonl(&out_dir.join(SCORED_FILE), &evaluation.scored_records)?;
    write(&out_dir.join(OUTCOMES_JSON), sorted_json(&evaluation.outcomes))?;
    write_outcomes_csv(&out_dir.join(OUTCOMES_CSV), &evaluation.outcomes)?;
    write(&out_dir.join(SUMMARY_FILE), sorted_json(&summary))?;

    Ok(RunResults {
        summary,
        evaluation,
        resumed_prompts: run.resumed_prompts,
        generated_prompts: run.generated_prompts,
    })
}

/// Reads a summary from a results directory or a summary file.
pub fn load_summary(path: &Path) -> Result<RunSummary> {
    let file: PathBuf = if path.is_dir() { path.join(SUMMARY_FILE) } else { path.to_path_buf() };
    let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: file.clone(),
        field: String::new(),
        message: e.to_string(),
    })?;
    let version = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Schema {
            path: file.clone(),
            field: "schema_version".into(),
            message: "missing or not an integer".into(),
        })?;
    if version > u64::from(SCHEMA_VERSION) {
        return Err(Error::Version {
            path: file,
            found: version.try_into().unwrap_or(u32::MAX),
            supported: SCHEMA_VERSION,
        });
    }
    serde_path_to_error::deserialize(value).map_err(|e| Error::Schema {
        path: file,
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

/// A comparison table rendered both as aligned text and as CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            padded.join("  ").trim_end().to_string()
        };
        let mut out = String::new();
        writeln!(out, "{}", line(&self.header)).unwrap();
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        writeln!(out, "{}", rule.join("  ")).unwrap();
        for row in &self.rows {
            writeln!(out, "{}", line(row)).unwrap();
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }
}

pub fn format_rate(x: f64) -> String {
    format!("{x:.2}")
}

pub fn format_p(p: Option<f64>) -> String {
    p.map_or_else(|| "n/a".to_string(), |p| format!("{p:.2e}"))
}

#[derive(Debug, Clone)]
pub struct Report {
    /// One row per run: model, dataset, leakage rates, p-value.
    pub overall: Table,
    /// One row per run and injected label.
    pub per_label: Table,
}

/// Builds comparison tables from one or more results directories or summary files.
pub fn cmd_report(paths: &[PathBuf]) -> Result<Report> {
    if paths.is_empty() {
        return Err(Error::Argument("report needs at least one results directory".into()));
    }
    let summaries = paths.iter().map(|p| load_summary(p)).collect::<Result<Vec<_>>>()?;
    let overall = Table {
        header: ["model", "dataset", "mu_L", "mu_EL", "W_EL p"].map(String::from).to_vec(),
        rows: summaries
            .iter()
            .map(|s| {
                vec![
                    s.backend.clone(),
                    s.dataset.clone(),
                    format_rate(s.mu_l),
                    format_rate(s.mu_el),
                    format_p(s.wilcoxon.as_ref().map(|w| w.p_value)),
                ]
            })
            .collect(),
    };
    let per_label = Table {
        header: ["model", "dataset", "label", "n", "EL rate", "L rate"].map(String::from).to_vec(),
        rows: summaries
            .iter()
            .flat_map(|s| {
                s.per_label.iter().map(move |(label, r)| {
                    vec![
                        s.backend.clone(),
                        s.dataset.clone(),
                        label.to_string(),
                        r.n.to_string(),
                        format_rate(r.el_rate),
                        format_rate(r.l_rate),
                    ]
                })
            })
            .collect(),
    };
    Ok(Report { overall, per_label })
}
