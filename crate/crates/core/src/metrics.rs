//! Expression- and semantic-leakage decisions over paired control/test generations.
//!
//! Per sample and injected label, the control and test generations are reduced to one
//! probability vector each (mean over generations). Expression leakage fires when the
//! test vector puts strictly more mass on the injected label than the control vector.
//! Semantic leakage compares mean cosine similarity of the generations to the concept
//! text, which for these datasets is the injected sentence itself.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scoring::{self, Scorer};
use crate::types::{Embedding, ExpressionLabel, GenerationRecord, LeakageOutcome, PromptSlot, SentimentScore};

/// Component-wise mean of probability vectors.
pub fn aggregate_generations(scores: &[SentimentScore]) -> Result<SentimentScore> {
    if scores.is_empty() {
        return Err(Error::Argument("cannot aggregate zero sentiment scores".into()));
    }
    let n = scores.len() as f64;
    let mut sum = [0.0_f64; 3];
    for s in scores {
        for (acc, p) in sum.iter_mut().zip(s.probs()) {
            *acc += p;
        }
    }
    SentimentScore::new(sum.map(|x| (x / n).clamp(0.0, 1.0)))
}

/// Returns `(el, paired_diff)` where `el = 1` iff `p_test[label] > p_ctl[label]`.
pub fn decide_el(p_test: &SentimentScore, p_ctl: &SentimentScore, label: ExpressionLabel) -> (u8, f64) {
    let diff = p_test.get(label) - p_ctl.get(label);
    (u8::from(diff > 0.0), diff)
}

/// Mean expression leakage over the charged (negative and positive) outcomes only.
pub fn mean_el(outcomes: &[LeakageOutcome]) -> Result<f64> {
    let charged: Vec<_> = outcomes.iter().filter(|o| o.label.is_charged()).collect();
    if charged.is_empty() {
        return Err(Error::InsufficientData(
            "no negative or positive outcomes to average".into(),
        ));
    }
    Ok(charged.iter().map(|o| f64::from(o.el)).sum::<f64>() / charged.len() as f64)
}

/// Mean semantic leakage over all outcomes.
pub fn mean_l(outcomes: &[LeakageOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::InsufficientData("no outcomes to average".into()));
    }
    Ok(outcomes.iter().map(|o| o.sem_l).sum::<f64>() / outcomes.len() as f64)
}

pub fn cosine(u: &Embedding, v: &Embedding) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::Argument(format!(
            "cosine of vectors with dimensions {} and {}",
            u.dim(),
            v.dim()
        )));
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Argument("cosine of a zero vector".into()));
    }
    let dot: f64 = u.as_slice().iter().zip(v.as_slice()).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// 1 if the test generation is closer to the concept, 0 if farther, 0.5 on a tie.
pub fn decide_sl(sim_test: f64, sim_ctl: f64) -> f64 {
    if sim_test > sim_ctl {
        1.0
    } else if sim_test < sim_ctl {
        0.0
    } else {
        0.5
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRates {
    pub n: usize,
    pub el_rate: f64,
    pub l_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageSummary {
    /// Expression leakage over negative and positive injections.
    pub mu_el: f64,
    /// Semantic leakage over all three injections.
    pub mu_l: f64,
    pub per_label: BTreeMap<ExpressionLabel, LabelRates>,
    pub n_samples: usize,
    pub n_pairs: usize,
    pub n_el_pairs: usize,
    pub degenerate_generations: usize,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub outcomes: Vec<LeakageOutcome>,
    pub summary: LeakageSummary,
    /// Input records with sentiment and embedding filled in, canonically ordered.
    pub scored_records: Vec<GenerationRecord>,
}

impl Evaluation {
    /// Paired differences of the charged outcomes, in outcome order.
    pub fn charged_diffs(&self) -> Vec<f64> {
        self.outcomes
            .iter()
            .filter(|o| o.label.is_charged())
            .map(|o| o.paired_diff)
            .collect()
    }
}

type Slots<'a> = HashMap<(&'a str, PromptSlot), Vec<&'a GenerationRecord>>;

/// Groups records by prompt, checking that every prompt of every sample has exactly
/// `samples_per_prompt` generations.
fn index_records<'a>(dataset: &Dataset, records: &'a [GenerationRecord], samples_per_prompt: u32) -> Result<Slots<'a>> {
    let spp = samples_per_prompt as usize;
    let mut slots: HashMap<(&str, PromptSlot), Vec<Option<&GenerationRecord>>> = HashMap::new();
    for r in records {
        if dataset.get(&r.sample_id).is_none() {
            return Err(Error::Integrity(format!("record for unknown sample `{}`", r.sample_id)));
        }
        if r.sample_index as usize >= spp {
            return Err(Error::Integrity(format!(
                "record ({}, {}) has sample_index {} >= {spp}",
                r.sample_id,
                r.slot(),
                r.sample_index
            )));
        }
        let entry = slots
            .entry((r.sample_id.as_str(), r.slot()))
            .or_insert_with(|| vec![None; spp]);
        if entry[r.sample_index as usize].replace(r).is_some() {
            return Err(Error::Integrity(format!(
                "duplicate record ({}, {}, {})",
                r.sample_id,
                r.slot(),
                r.sample_index
            )));
        }
    }
    let mut gaps = Vec::new();
    for sample in dataset.samples() {
        for slot in PromptSlot::ALL {
            match slots.get(&(sample.id(), slot)) {
                None => gaps.push(format!("({}, {slot})", sample.id())),
                Some(v) if v.iter().any(Option::is_none) => {
                    let missing: Vec<String> = v
                        .iter()
                        .enumerate()
                        .filter(|(_, r)| r.is_none())
                        .map(|(i, _)| i.to_string())
                        .collect();
                    gaps.push(format!("({}, {slot}) indices [{}]", sample.id(), missing.join(",")));
                }
                Some(_) => {}
            }
        }
    }
    if !gaps.is_empty() {
        return Err(Error::Coverage(gaps));
    }
    Ok(slots
        .into_iter()
        .map(|(k, v)| (k, v.into_iter().map(|r| r.expect("coverage checked")).collect()))
        .collect())
}

fn sentiment_of(r: &GenerationRecord) -> Result<&SentimentScore> {
    r.sentiment.as_ref().ok_or_else(|| {
        Error::Integrity(format!("record ({}, {}, {}) has no sentiment", r.sample_id, r.slot(), r.sample_index))
    })
}

fn embedding_of(r: &GenerationRecord) -> Result<&Embedding> {
    r.embedding.as_ref().ok_or_else(|| {
        Error::Integrity(format!("record ({}, {}, {}) has no embedding", r.sample_id, r.slot(), r.sample_index))
    })
}

fn mean_similarity(concept: &Embedding, gens: &[&GenerationRecord]) -> Result<f64> {
    let mut sum = 0.0;
    for r in gens {
        sum += cosine(concept, embedding_of(r)?)?;
    }
    Ok(sum / gens.len() as f64)
}

/// Leakage outcomes from records that already carry sentiment and embeddings.
/// `concepts` maps each injected sentence to its embedding.
pub fn evaluate_scored(
    dataset: &Dataset,
    records: &[GenerationRecord],
    samples_per_prompt: u32,
    concepts: &HashMap<String, Embedding>,
) -> Result<Evaluation> {
    let slots = index_records(dataset, records, samples_per_prompt)?;
    let mut outcomes = Vec::with_capacity(dataset.len() * 3);
    for sample in dataset.samples() {
        let control = &slots[&(sample.id(), PromptSlot::Control)];
        let ctl_scores: Vec<SentimentScore> = control.iter().map(|r| sentiment_of(r).copied()).collect::<Result<_>>()?;
        let p_ctl = aggregate_generations(&ctl_scores)?;
        for test in sample.tests() {
            let label = test.label();
            let gens = &slots[&(sample.id(), PromptSlot::Test(label))];
            let test_scores: Vec<SentimentScore> = gens.iter().map(|r| sentiment_of(r).copied()).collect::<Result<_>>()?;
            let p_test = aggregate_generations(&test_scores)?;
            let (el, paired_diff) = decide_el(&p_test, &p_ctl, label);
            let per_generation_el = test_scores
                .iter()
                .zip(&ctl_scores)
                .map(|(t, c)| decide_el(t, c, label).0)
                .collect();

            let concept = concepts.get(test.injected_sentence()).ok_or_else(|| {
                Error::Integrity(format!("no concept embedding for `{}`", test.injected_sentence()))
            })?;
            let sim_test = mean_similarity(concept, gens)?;
            let sim_ctl = mean_similarity(concept, control)?;
            outcomes.push(LeakageOutcome {
                sample_id: sample.id().to_string(),
                label,
                el,
                paired_diff,
                sem_l: decide_sl(sim_test, sim_ctl),
                sim_test,
                sim_ctl,
                per_generation_el,
            });
        }
    }

    let mut per_label = BTreeMap::new();
    for label in ExpressionLabel::ALL {
        let rows: Vec<_> = outcomes.iter().filter(|o| o.label == label).collect();
        let n = rows.len();
        per_label.insert(
            label,
            LabelRates {
                n,
                el_rate: rows.iter().map(|o| f64::from(o.el)).sum::<f64>() / n as f64,
                l_rate: rows.iter().map(|o| o.sem_l).sum::<f64>() / n as f64,
            },
        );
    }
    let summary = LeakageSummary {
        mu_el: mean_el(&outcomes)?,
        mu_l: mean_l(&outcomes)?,
        per_label,
        n_samples: dataset.len(),
        n_pairs: outcomes.len(),
        n_el_pairs: outcomes.iter().filter(|o| o.label.is_charged()).count(),
        degenerate_generations: records.iter().filter(|r| r.degenerate).count(),
    };
    let mut scored_records = records.to_vec();
    scored_records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(Evaluation {
        outcomes,
        summary,
        scored_records,
    })
}

/// Scores cleaned generations and concept sentences with `scorer`, then evaluates.
pub async fn evaluate_run(
    dataset: &Dataset,
    records: &[GenerationRecord],
    samples_per_prompt: u32,
    scorer: &dyn Scorer,
    batch_size: usize,
) -> Result<Evaluation> {
    // Fail on gaps before spending scorer calls.
    index_records(dataset, records, samples_per_prompt)?;
    let batch_size = batch_size.max(1);
    let mut scored = records.to_vec();
    scored.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    for chunk in scored.chunks_mut(batch_size) {
        let texts: Vec<String> = chunk.iter().map(|r| r.cleaned_text.clone()).collect();
        let sentiments = scoring::sentiment(&texts, scorer).await?;
        let embeddings = scoring::embed(&texts, scorer).await?;
        for ((r, s), e) in chunk.iter_mut().zip(sentiments).zip(embeddings) {
            r.sentiment = Some(s);
            r.embedding = Some(e);
        }
    }

    let mut concept_texts: Vec<String> = dataset
        .samples()
        .iter()
        .flat_map(|s| s.tests().iter().map(|t| t.injected_sentence().to_string()))
        .collect();
    concept_texts.sort();
    concept_texts.dedup();
    let mut concepts = HashMap::new();
    for chunk in concept_texts.chunks(batch_size) {
        let vectors = scoring::embed(chunk, scorer).await?;
        concepts.extend(chunk.iter().cloned().zip(vectors));
    }

    let dims: Vec<usize> = scored
        .iter()
        .filter_map(|r| r.embedding.as_ref().map(Embedding::dim))
        .chain(concepts.values().map(Embedding::dim))
        .collect();
    if dims.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::Protocol {
            endpoint: scorer.descriptor(),
            message: "embedding dimension changed within the run".into(),
        });
    }
    evaluate_scored(dataset, &scored, samples_per_prompt, &concepts)
}
