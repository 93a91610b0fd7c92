#![allow(dead_code)]

use exleak::dataset::{Dataset, DatasetKind, PromptSample, Provenance};
use exleak::scoring::stub::lexicon;
use exleak::types::{ExpressionLabel, GenerationRecord, PromptKind, SentimentScore};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SUBJECTS: &[&str] = &["She", "He", "My neighbor", "The teacher", "Our driver", "The old man", "A student", "My cousin"];
const VERBS: &[&str] = &["carried", "painted", "found", "moved", "opened", "checked", "cleaned", "described"];
const NOUNS: &[&str] = &["the box", "a fence", "the window", "a ladder", "the table", "a parcel", "the garden", "a bicycle", "the lamp", "a kettle"];
const TIMES: &[&str] = &["this morning", "after lunch", "on Sunday", "before dinner", "last week", "at noon"];

fn words(label: ExpressionLabel) -> Vec<&'static str> {
    lexicon(label).iter().map(|(w, _)| *w).collect()
}

/// A sentence whose stub-scorer argmax is `label`.
pub fn sentence(label: ExpressionLabel, rng: &mut ChaCha8Rng) -> String {
    let s = SUBJECTS.choose(rng).unwrap();
    let v = VERBS.choose(rng).unwrap();
    let n = NOUNS.choose(rng).unwrap();
    let t = TIMES.choose(rng).unwrap();
    match label {
        ExpressionLabel::Neutral => format!("{s} {v} {n} {t}."),
        charged => {
            let pool = words(charged);
            let a = pool.choose(rng).unwrap();
            if rng.gen_bool(0.5) {
                let b = pool.choose(rng).unwrap();
                format!("{s} {v} {n} {t} and felt {a} and {b}.")
            } else {
                format!("{s} {v} {n} {t} and it was {a}.")
            }
        }
    }
}

/// `total` distinct sentences, split as evenly as possible across labels, shuffled.
pub fn corpus(total: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, label) in ExpressionLabel::ALL.into_iter().enumerate() {
        let want = total / 3 + usize::from(i < total % 3);
        let mut made = 0;
        while made < want {
            let s = sentence(label, &mut rng);
            if seen.insert(s.clone()) {
                out.push(s);
                made += 1;
            }
        }
    }
    out.shuffle(&mut rng);
    out
}

/// Hand-assembled dataset with `n` samples; injected sentences carry lexicon words
/// of their label.
pub fn synthetic_dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|i| {
            let stem = format!(
                "{} {} {}",
                SUBJECTS.choose(&mut rng).unwrap(),
                VERBS.choose(&mut rng).unwrap(),
                NOUNS.choose(&mut rng).unwrap()
            );
            let tests = ExpressionLabel::ALL
                .into_iter()
                .map(|l| (sentence(l, &mut rng), l))
                .collect();
            PromptSample::new(format!("syn-{i:05}"), stem, tests, Provenance::curated()).unwrap()
        })
        .collect();
    Dataset::new("synthetic", DatasetKind::Curated, samples).unwrap()
}

pub fn record(
    sample_id: &str,
    label: Option<ExpressionLabel>,
    sample_index: u32,
    text: &str,
    sentiment: Option<SentimentScore>,
) -> GenerationRecord {
    GenerationRecord {
        sample_id: sample_id.to_string(),
        prompt_kind: if label.is_some() { PromptKind::Test } else { PromptKind::Control },
        label,
        sample_index,
        seed: exleak::seed::sample_seed(0, sample_index),
        raw_text: text.to_string(),
        cleaned_text: text.to_string(),
        degenerate: false,
        sentiment,
        embedding: None,
    }
}
