//! Command-line interface.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::datagen::{generate_dataset, read_corpus, DatagenConfig};
use crate::dataset::{load_dataset, save_dataset, Dataset};
use crate::error::{Error, Result};
use crate::genpipe::{read_checkpoint, Dialect, GenerationBackend, HttpBackend, StubBackend};
use crate::report::{cmd_report, cmd_run, load_summary, RunOptions};
use crate::retry::RetryPolicy;
use crate::scoring::{HttpScorer, Scorer, StubScorer};
use crate::serve::{backend_router, scorer_router, serve};
use crate::stats::{length_summary, write_length_tables, DEFAULT_ALPHA};
use crate::types::{GenerationConfig, InstructionMode};

#[derive(Debug, Parser)]
#[command(name = "exleak", version, about = "Expression-leakage benchmarking harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a sentiment-controlled dataset from a sentence corpus.
    Datagen(DatagenArgs),
    /// Generate, score and summarize a dataset.
    Run(RunArgs),
    /// Compare results directories.
    Report(ReportArgs),
    /// Token-length analysis of the injected sentences.
    Stats(StatsArgs),
    /// Check dataset, checkpoint and summary files against their schemas.
    Validate(ValidateArgs),
    /// Serve the stub scorer or stub backend over HTTP.
    ServeStub(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ScorerArgs {
    /// Scorer base URL, or `stub`.
    #[arg(long, env = "EXLEAK_SCORER")]
    pub scorer: Option<String>,
    /// Symmetric noise amplitude for the stub scorer.
    #[arg(long, default_value_t = 0.0)]
    pub scorer_noise: f64,
    #[arg(long, default_value_t = 3)]
    pub max_retries: u32,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 120)]
    pub timeout: u64,
}

impl ScorerArgs {
    fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            request_timeout: Duration::from_secs(self.timeout),
            ..Default::default()
        }
    }

    fn build(&self, seed: u64) -> Result<Arc<dyn Scorer>> {
        let endpoint = self.scorer.as_deref().ok_or_else(|| {
            Error::Config("no scorer given; pass --scorer URL, --scorer stub, or set EXLEAK_SCORER".into())
        })?;
        if endpoint == "stub" {
            let mut s = StubScorer::new();
            if self.scorer_noise > 0.0 {
                s = s.with_noise(self.scorer_noise, seed);
            }
            return Ok(Arc::new(s));
        }
        check_url(endpoint)?;
        Ok(Arc::new(HttpScorer::new(endpoint, self.retry())))
    }
}

fn check_url(endpoint: &str) -> Result<()> {
    if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
        Ok(())
    } else {
        Err(Error::Config(format!("`{endpoint}` is neither `stub` nor an http(s) URL")))
    }
}

/// `stub` with optional `+echo`, `+leaky`, `+fixed` modifiers.
fn stub_backend(endpoint: &str) -> Result<StubBackend> {
    let mut parts = endpoint.split('+');
    parts.next();
    parts.try_fold(StubBackend::new(), |b, part| match part {
        "echo" => Ok(b.echo()),
        "leaky" => Ok(b.leaky()),
        "fixed" => Ok(b.prompt_independent()),
        other => Err(Error::Config(format!("unknown stub backend option `{other}`"))),
    })
}

#[derive(Debug, Args)]
pub struct DatagenArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "aexl")]
    pub name: String,
    #[arg(long, default_value_t = 200)]
    pub m: usize,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub neutral_split: f64,
    #[arg(long, default_value_t = 4)]
    pub truncate_words: usize,
    #[arg(long, default_value_t = 8)]
    pub max_in_flight: usize,
    #[command(flatten)]
    pub scorer: ScorerArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Generation backend base URL, or `stub[+echo][+leaky][+fixed]`.
    #[arg(long, env = "EXLEAK_BACKEND")]
    pub backend: Option<String>,
    #[arg(long, default_value = "native", value_parser = ["native", "completions"])]
    pub dialect: String,
    /// Model name sent in the completions dialect.
    #[arg(long, default_value = "default")]
    pub model: String,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    #[arg(long, default_value = "complete")]
    pub mode: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    pub top_p: f64,
    #[arg(long, default_value_t = 50)]
    pub top_k: u32,
    #[arg(long, default_value_t = 1.1)]
    pub repetition_penalty: f64,
    #[arg(long, default_value_t = 128)]
    pub max_new_tokens: u32,
    #[arg(long, default_value_t = 10)]
    pub samples_per_prompt: u32,
    #[arg(long, default_value_t = 8)]
    pub max_in_flight: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Results directories or summary files.
    #[arg(required = true)]
    pub results: Vec<PathBuf>,
    /// Also write report.csv and report_per_label.csv here.
    #[arg(long)]
    pub csv_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "gpt2")]
    pub tokenizer: String,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, value_parser = ["scorer", "backend"])]
    pub role: String,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Stub backend variant, as in `run --backend`.
    #[arg(long, default_value = "stub")]
    pub backend: String,
    #[arg(long, default_value_t = 0.0)]
    pub scorer_noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub async fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Datagen(a) => datagen(a).await,
        Command::Run(a) => run(a).await,
        Command::Report(a) => report(a),
        Command::Stats(a) => stats(a).await,
        Command::Validate(a) => validate(a),
        Command::ServeStub(a) => serve_stub(a).await,
    }
}

async fn datagen(a: DatagenArgs) -> Result<()> {
    let cfg = DatagenConfig {
        m: a.m,
        n: a.n,
        k: a.k,
        neutral_split_ratio: a.neutral_split,
        truncate_words: a.truncate_words,
        seed: a.seed,
        ..Default::default()
    };
    cfg.validate()?;
    let scorer = a.scorer.build(a.seed)?;
    let corpus = read_corpus(&a.corpus)?;
    let out = generate_dataset(&a.name, &corpus, scorer.as_ref(), &cfg, a.max_in_flight).await?;
    save_dataset(&out.dataset, &a.out)?;
    println!("{}", serde_json::to_string_pretty(&out.stats).expect("stats serialize"));
    println!("wrote {} samples to {}", out.dataset.len(), a.out.display());
    Ok(())
}

async fn run(a: RunArgs) -> Result<()> {
    let generation = GenerationConfig {
        top_p: a.top_p,
        top_k: a.top_k,
        repetition_penalty: a.repetition_penalty,
        max_new_tokens: a.max_new_tokens,
        samples_per_prompt: a.samples_per_prompt,
        seed: a.seed,
        instruction_mode: a.mode.parse::<InstructionMode>()?,
    };
    generation.validate()?;
    let backend_endpoint = a.backend.as_deref().ok_or_else(|| {
        Error::Config("no backend given; pass --backend URL, --backend stub, or set EXLEAK_BACKEND".into())
    })?;
    let backend: Arc<dyn GenerationBackend> = if backend_endpoint == "stub" || backend_endpoint.starts_with("stub+") {
        Arc::new(stub_backend(backend_endpoint)?)
    } else {
        check_url(backend_endpoint)?;
        let dialect = if a.dialect == "completions" { Dialect::Completions } else { Dialect::Native };
        Arc::new(HttpBackend::new(backend_endpoint, dialect, a.model.clone(), a.scorer.retry()))
    };
    let scorer = a.scorer.build(a.seed)?;
    let dataset = load_dataset(&a.dataset)?;
    let opts = RunOptions {
        generation,
        max_in_flight: a.max_in_flight,
        batch_size: a.batch_size,
        alpha: a.alpha,
    };
    let results = cmd_run(&dataset, backend.as_ref(), scorer.as_ref(), &opts, &a.out).await?;
    let s = &results.summary;
    println!(
        "mu_EL={:.4} mu_L={:.4} p={} significant={} ({} prompts resumed, {} generated)",
        s.mu_el,
        s.mu_l,
        crate::report::format_p(s.wilcoxon.as_ref().map(|w| w.p_value)),
        s.significant,
        results.resumed_prompts,
        results.generated_prompts,
    );
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let r = cmd_report(&a.results)?;
    print!("{}\n{}", r.overall.to_text(), r.per_label.to_text());
    if let Some(dir) = a.csv_dir {
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (name, table) in [("report.csv", &r.overall), ("report_per_label.csv", &r.per_label)] {
            let path = dir.join(name);
            std::fs::write(&path, table.to_csv()).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

async fn stats(a: StatsArgs) -> Result<()> {
    let dataset = load_dataset(&a.dataset)?;
    let scorer = match a.scorer.scorer {
        Some(_) => Some(a.scorer.build(0)?),
        None => None,
    };
    let summary = length_summary(dataset.samples(), &a.tokenizer, scorer.as_deref()).await?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    write_length_tables(&summary, &a.out)?;
    for (label, l) in &summary.per_label {
        println!("{label:<8} n={:<5} mean={:.2} sd={:.2}", l.n, l.mean, l.stddev);
    }
    Ok(())
}

/// What a file passed to `validate` turned out to be.
pub fn validate_file(path: &Path) -> Result<&'static str> {
    if path.is_dir() || path.file_name().is_some_and(|n| n == crate::report::SUMMARY_FILE) {
        load_summary(path)?;
        return Ok("summary");
    }
    if path.extension().is_some_and(|e| e == "jsonl") {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            serde_json::from_str::<crate::types::GenerationRecord>(line).map_err(|e| Error::Schema {
                path: path.to_path_buf(),
                field: format!("line {}", i + 1),
                message: e.to_string(),
            })?;
        }
        read_checkpoint(path)?;
        return Ok("generations");
    }
    let _: Dataset = load_dataset(path)?;
    Ok("dataset")
}

fn validate(a: ValidateArgs) -> Result<()> {
    for f in &a.files {
        let kind = validate_file(f)?;
        println!("ok {} ({kind})", f.display());
    }
    Ok(())
}

async fn serve_stub(a: ServeArgs) -> Result<()> {
    let router = if a.role == "scorer" {
        let mut s = StubScorer::new();
        if a.scorer_noise > 0.0 {
            s = s.with_noise(a.scorer_noise, a.seed);
        }
        scorer_router(Arc::new(s))
    } else {
        if !(a.backend == "stub" || a.backend.starts_with("stub+")) {
            return Err(Error::Config(format!("`{}` is not a stub backend", a.backend)));
        }
        backend_router(Arc::new(stub_backend(&a.backend)?))
    };
    serve(router, a.addr).await
}
