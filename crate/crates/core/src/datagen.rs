//! Sentiment-controlled dataset generation from a raw sentence corpus.
//!
//! Pipeline: score every sentence, keep the top-`m` sentences per label (by that
//! label's probability, among sentences whose argmax is the label), draw `n` of them
//! without replacement with probability proportional to the label probability, split
//! the neutral draw into injected sentences and control sources, truncate the control
//! sources into stems, and pair every stem with one sentence per label for `k` rounds.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use futures::stream::{self, StreamExt, TryStreamExt};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetKind, PromptSample, Provenance};
use crate::error::{Error, Result};
use crate::scoring::{self, Scorer};
use crate::seed::{derive_seed, rng};
use crate::types::{ExpressionLabel, SentimentScore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatagenConfig {
    /// Pool size per label.
    pub m: usize,
    /// Sentences drawn per label.
    pub n: usize,
    /// Pairing rounds.
    pub k: usize,
    pub neutral_split_ratio: f64,
    pub truncate_words: usize,
    pub seed: u64,
    pub min_sentence_chars: usize,
    pub max_sentence_chars: usize,
}

impl Default for DatagenConfig {
    /// 50 control stems × 4 rounds = 200 samples.
    fn default() -> Self {
        DatagenConfig {
            m: 200,
            n: 100,
            k: 4,
            neutral_split_ratio: 0.5,
            truncate_words: 4,
            seed: 0,
            min_sentence_chars: 20,
            max_sentence_chars: 200,
        }
    }
}

impl DatagenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > self.m {
            return Err(Error::Config(format!("need 0 < n <= m, got n={} m={}", self.n, self.m)));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if !(self.neutral_split_ratio > 0.0 && self.neutral_split_ratio < 1.0) {
            return Err(Error::Config(format!(
                "neutral split ratio must be in (0, 1), got {}",
                self.neutral_split_ratio
            )));
        }
        if self.truncate_words < 2 {
            return Err(Error::Config("truncate_words must be >= 2".into()));
        }
        if self.min_sentence_chars > self.max_sentence_chars {
            return Err(Error::Config("min_sentence_chars exceeds max_sentence_chars".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSentence {
    pub text: String,
    pub score: SentimentScore,
    pub argmax: ExpressionLabel,
}

impl ScoredSentence {
    pub fn new(text: impl Into<String>, score: SentimentScore) -> Self {
        ScoredSentence {
            text: text.into(),
            argmax: score.argmax(),
            score,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScoredCorpus {
    /// In corpus order.
    pub sentences: Vec<ScoredSentence>,
    /// Sentences outside the length bounds or containing control characters.
    pub dropped: usize,
    /// Exact repeats of an earlier sentence.
    pub duplicates: usize,
}

/// Reads one sentence per line, or JSON lines carrying a `text` field.
pub fn read_corpus(path: &Path) -> Result<Vec<String>> {
    #[derive(Deserialize)]
    struct Line {
        text: String,
    }
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<&str> = content.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let jsonl = path.extension().is_some_and(|e| e == "jsonl")
        || lines.first().is_some_and(|l| l.starts_with('{'));
    if !jsonl {
        return Ok(lines.into_iter().map(str::to_string).collect());
    }
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str::<Line>(l).map(|l| l.text).map_err(|e| Error::Schema {
                path: path.to_path_buf(),
                field: format!("line {}", i + 1),
                message: e.to_string(),
            })
        })
        .collect()
}

const SCORE_BATCH: usize = 64;

pub async fn score_corpus(
    corpus: &[String],
    scorer: &dyn Scorer,
    cfg: &DatagenConfig,
    max_in_flight: usize,
) -> Result<ScoredCorpus> {
    if corpus.is_empty() {
        return Err(Error::EmptyPool("corpus is empty".into()));
    }
    let mut dropped = 0;
    let mut duplicates = 0;
    let mut seen = HashSet::new();
    let mut kept: Vec<String> = Vec::new();
    for s in corpus {
        let chars = s.chars().count();
        if chars < cfg.min_sentence_chars || chars > cfg.max_sentence_chars || s.chars().any(char::is_control) {
            dropped += 1;
        } else if !seen.insert(s.as_str()) {
            duplicates += 1;
        } else {
            kept.push(s.clone());
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyPool(format!(
            "all {} corpus sentences were filtered out",
            corpus.len()
        )));
    }
    // `buffered` yields in input order regardless of completion order.
    let scores: Vec<Vec<SentimentScore>> = stream::iter(kept.chunks(SCORE_BATCH))
        .map(|chunk| scoring::sentiment(chunk, scorer))
        .buffered(max_in_flight.max(1))
        .try_collect()
        .await?;
    let sentences = kept
        .into_iter()
        .zip(scores.into_iter().flatten())
        .map(|(text, score)| ScoredSentence::new(text, score))
        .collect();
    Ok(ScoredCorpus {
        sentences,
        dropped,
        duplicates,
    })
}

#[derive(Debug, Clone)]
pub struct PoolSelection {
    pub items: Vec<ScoredSentence>,
    /// Fewer than `m` candidates were available.
    pub short: bool,
}

/// The `m` sentences with the highest probability for `label`, descending;
/// equal probabilities are ordered by text.
pub fn select_pool(scored: &[ScoredSentence], label: ExpressionLabel, m: usize) -> Result<PoolSelection> {
    if m == 0 {
        return Err(Error::Argument("pool size m must be positive".into()));
    }
    let mut items = scored.to_vec();
    items.sort_by(|a, b| {
        b.score
            .get(label)
            .total_cmp(&a.score.get(label))
            .then_with(|| a.text.cmp(&b.text))
    });
    let short = items.len() < m;
    items.truncate(m);
    Ok(PoolSelection { items, short })
}

/// Draws `n` distinct sentences; each draw picks among the remaining candidates
/// with probability proportional to their `label` probability.
pub fn weighted_sample(pool: &[ScoredSentence], label: ExpressionLabel, n: usize, seed: u64) -> Result<Vec<ScoredSentence>> {
    if n > pool.len() {
        return Err(Error::Argument(format!(
            "cannot draw {n} sentences from a pool of {}",
            pool.len()
        )));
    }
    let mut rng = rng(seed);
    let mut remaining: Vec<&ScoredSentence> = pool.iter().collect();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let weights: Vec<f64> = remaining.iter().map(|s| s.score.get(label)).collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Degenerate(format!(
                "remaining {label} weights sum to {total}"
            )));
        }
        let mut r = rng.gen::<f64>() * total;
        let mut pick = None;
        for (i, w) in weights.iter().enumerate() {
            if *w > 0.0 {
                pick = Some(i);
                if r < *w {
                    break;
                }
                r -= w;
            }
        }
        let pick = pick.expect("positive total implies a positive weight");
        out.push(remaining.remove(pick).clone());
    }
    Ok(out)
}

/// Seeded shuffle split into (test neutrals, control sources), with
/// `round(ratio · len)` control sources, kept within [1, len − 1].
pub fn partition_neutral(
    neutral: &[ScoredSentence],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<ScoredSentence>, Vec<ScoredSentence>)> {
    if neutral.len() < 2 {
        return Err(Error::InsufficientPool {
            label: ExpressionLabel::Neutral,
            message: format!("need at least 2 neutral sentences to split, have {}", neutral.len()),
        });
    }
    let mut shuffled = neutral.to_vec();
    shuffled.shuffle(&mut rng(seed));
    let controls = ((ratio * neutral.len() as f64).round() as usize).clamp(1, neutral.len() - 1);
    let tests = shuffled.split_off(controls);
    Ok((tests, shuffled))
}

/// First `truncate_words` words with trailing sentence punctuation removed, or
/// `None` when the sentence is too short to yield a stem.
pub fn truncate_control(sentence: &str, truncate_words: usize) -> Option<String> {
    let words: Vec<&str> = sentence.split_whitespace().collect();
    if words.len() < truncate_words || truncate_words == 0 {
        return None;
    }
    let stem = words[..truncate_words].join(" ");
    let stem = stem.trim_end_matches(|c: char| matches!(c, '.' | '!' | '?' | ',' | ';' | ':') || c.is_whitespace());
    (!stem.is_empty()).then(|| stem.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlStem {
    pub stem: String,
    /// The neutral sentence the stem was cut from.
    pub source: String,
}

/// Pairs every control stem with one sentence per label in each of `k` rounds.
/// Within a (stem, label) the sentences follow a seeded permutation, so a pair only
/// repeats once the pool is exhausted.
pub fn assemble_dataset(
    name: &str,
    positive: &[ScoredSentence],
    neutral: &[ScoredSentence],
    negative: &[ScoredSentence],
    controls: &[ControlStem],
    k: usize,
    seed: u64,
) -> Result<Dataset> {
    for (label, pool) in [
        (ExpressionLabel::Negative, negative),
        (ExpressionLabel::Neutral, neutral),
        (ExpressionLabel::Positive, positive),
    ] {
        if pool.is_empty() {
            return Err(Error::InsufficientPool {
                label,
                message: "no sentences to inject".into(),
            });
        }
    }
    if controls.is_empty() {
        return Err(Error::InsufficientPool {
            label: ExpressionLabel::Neutral,
            message: "no control stems".into(),
        });
    }
    if k == 0 {
        return Err(Error::Argument("k must be >= 1".into()));
    }
    let round_width = (k - 1).to_string().len().max(2);
    let control_width = (controls.len() - 1).to_string().len().max(3);

    let orders: Vec<[Vec<usize>; 3]> = controls
        .iter()
        .enumerate()
        .map(|(c, _)| {
            ExpressionLabel::ALL.map(|label| {
                let len = match label {
                    ExpressionLabel::Negative => negative.len(),
                    ExpressionLabel::Neutral => neutral.len(),
                    ExpressionLabel::Positive => positive.len(),
                };
                let mut order: Vec<usize> = (0..len).collect();
                order.shuffle(&mut rng(derive_seed(seed, &[c as u64, label.index() as u64])));
                order
            })
        })
        .collect();

    let mut samples = Vec::with_capacity(k * controls.len());
    for round in 0..k {
        for (c, control) in controls.iter().enumerate() {
            let tests = ExpressionLabel::ALL
                .into_iter()
                .map(|label| {
                    let pool = match label {
                        ExpressionLabel::Negative => negative,
                        ExpressionLabel::Neutral => neutral,
                        ExpressionLabel::Positive => positive,
                    };
                    let order = &orders[c][label.index()];
                    (pool[order[round % order.len()]].text.clone(), label)
                })
                .collect();
            samples.push(PromptSample::new(
                format!("aexl-r{round:0round_width$}-c{c:0control_width$}"),
                control.stem.clone(),
                tests,
                Provenance::generated(control.source.clone()),
            )?);
        }
    }
    Dataset::new(name, DatasetKind::Generated, samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatagenStats {
    pub retained: usize,
    pub dropped: usize,
    pub duplicates: usize,
    /// Candidates per label (argmax equal to the label).
    pub candidates: BTreeMap<ExpressionLabel, usize>,
    pub pool_sizes: BTreeMap<ExpressionLabel, usize>,
    pub short_pools: Vec<ExpressionLabel>,
    pub controls: usize,
    /// Control sources too short to truncate.
    pub controls_skipped: usize,
}

#[derive(Debug, Clone)]
pub struct DatagenOutput {
    pub dataset: Dataset,
    pub stats: DatagenStats,
}

/// Runs the whole generation pipeline. A pure function of the corpus, the scorer's
/// outputs and `cfg`.
pub async fn generate_dataset(
    name: &str,
    corpus: &[String],
    scorer: &dyn Scorer,
    cfg: &DatagenConfig,
    max_in_flight: usize,
) -> Result<DatagenOutput> {
    cfg.validate()?;
    let scored = score_corpus(corpus, scorer, cfg, max_in_flight).await?;

    let mut candidates = BTreeMap::new();
    let mut pool_sizes = BTreeMap::new();
    let mut short_pools = Vec::new();
    let mut drawn: BTreeMap<ExpressionLabel, Vec<ScoredSentence>> = BTreeMap::new();
    for label in ExpressionLabel::ALL {
        let own: Vec<ScoredSentence> = scored
            .sentences
            .iter()
            .filter(|s| s.argmax == label)
            .cloned()
            .collect();
        candidates.insert(label, own.len());
        if own.len() < cfg.n {
            return Err(Error::InsufficientPool {
                label,
                message: format!("{} candidate sentences, need n={}", own.len(), cfg.n),
            });
        }
        let pool = select_pool(&own, label, cfg.m)?;
        if pool.short {
            tracing::warn!(%label, size = pool.items.len(), m = cfg.m, "pool smaller than m");
            short_pools.push(label);
        }
        pool_sizes.insert(label, pool.items.len());
        let seed = derive_seed(cfg.seed, &[1, label.index() as u64]);
        drawn.insert(label, weighted_sample(&pool.items, label, cfg.n, seed)?);
    }

    let (test_neutral, control_sources) = partition_neutral(
        &drawn[&ExpressionLabel::Neutral],
        cfg.neutral_split_ratio,
        derive_seed(cfg.seed, &[2]),
    )?;
    let controls: Vec<ControlStem> = control_sources
        .iter()
        .filter_map(|s| {
            truncate_control(&s.text, cfg.truncate_words).map(|stem| ControlStem {
                stem,
                source: s.text.clone(),
            })
        })
        .collect();
    let controls_skipped = control_sources.len() - controls.len();

    let dataset = assemble_dataset(
        name,
        &drawn[&ExpressionLabel::Positive],
        &test_neutral,
        &drawn[&ExpressionLabel::Negative],
        &controls,
        cfg.k,
        derive_seed(cfg.seed, &[3]),
    )?;
    Ok(DatagenOutput {
        dataset,
        stats: DatagenStats {
            retained: scored.sentences.len(),
            dropped: scored.dropped,
            duplicates: scored.duplicates,
            candidates,
            pool_sizes,
            short_pools,
            controls: controls.len(),
            controls_skipped,
        },
    })
}
