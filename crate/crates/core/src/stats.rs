//! One-sided Wilcoxon signed-rank test and injected-sentence length analysis.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::dataset::PromptSample;
use crate::error::{Error, Result};
use crate::scoring::{self, Scorer};
use crate::types::ExpressionLabel;

/// Largest number of non-zero differences handled by exact enumeration.
pub const EXACT_MAX_N: usize = 20;

pub const DEFAULT_ALPHA: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Differences left after discarding zeros.
    pub n_effective: usize,
    /// Sum of the ranks of positive differences.
    pub w_plus: f64,
    /// `P(W+ >= w_plus)` under the null hypothesis.
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

/// Average ranks of `|d|`, doubled so they are integers.
fn doubled_ranks(abs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0; abs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        // Positions i..=j share rank (i+1 + j+1) / 2.
        let doubled = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            ranks[k] = doubled;
        }
        i = j + 1;
    }
    ranks
}

/// Tests H1: median(d) > 0. Zero differences are discarded and tied magnitudes
/// share their average rank.
pub fn wilcoxon_one_sided(d: &[f64]) -> Result<WilcoxonResult> {
    if d.is_empty() {
        return Err(Error::InsufficientData("no paired differences".into()));
    }
    if let Some(bad) = d.iter().find(|x| !x.is_finite()) {
        return Err(Error::Argument(format!("non-finite paired difference {bad}")));
    }
    let nonzero: Vec<f64> = d.iter().copied().filter(|&x| x != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return Err(Error::Degenerate("all paired differences are zero".into()));
    }
    let abs: Vec<f64> = nonzero.iter().map(|x| x.abs()).collect();
    let ranks = doubled_ranks(&abs);
    let w2: u64 = nonzero.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let w_plus = w2 as f64 / 2.0;

    if n <= EXACT_MAX_N {
        let total: u64 = ranks.iter().sum();
        let mut counts = vec![0u64; total as usize + 1];
        counts[0] = 1;
        let mut reach = 0usize;
        for &r in &ranks {
            let r = r as usize;
            for s in (0..=reach).rev() {
                counts[s + r] += counts[s];
            }
            reach += r;
        }
        let tail: u64 = counts[w2 as usize..].iter().sum();
        return Ok(WilcoxonResult {
            n_effective: n,
            w_plus,
            p_value: tail as f64 / (1u64 << n) as f64,
            method: WilcoxonMethod::Exact,
        });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut ties: BTreeMap<u64, u64> = BTreeMap::new();
    for r in &ranks {
        *ties.entry(*r).or_default() += 1;
    }
    let tie_term: f64 = ties.values().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let z = (w_plus - mean - 0.5) / var.sqrt();
    Ok(WilcoxonResult {
        n_effective: n,
        w_plus,
        p_value: (0.5 * erfc(z / std::f64::consts::SQRT_2)).clamp(0.0, 1.0),
        method: WilcoxonMethod::NormalApprox,
    })
}

/// True iff `p_value < alpha`.
pub fn significance_gate(result: &WilcoxonResult, alpha: f64) -> bool {
    result.p_value < alpha
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelLengths {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single sentence.
    pub stddev: f64,
    /// Token count → number of injected sentences with that count.
    pub histogram: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthSummary {
    pub tokenizer: String,
    pub per_label: BTreeMap<ExpressionLabel, LabelLengths>,
}

/// Token lengths of every injected sentence, grouped by label.
pub async fn length_summary(
    samples: &[PromptSample],
    tokenizer_id: &str,
    scorer: Option<&dyn Scorer>,
) -> Result<LengthSummary> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no samples to measure".into()));
    }
    let mut texts = Vec::with_capacity(samples.len() * 3);
    let mut labels = Vec::with_capacity(samples.len() * 3);
    for s in samples {
        for t in s.tests() {
            texts.push(t.injected_sentence().to_string());
            labels.push(t.label());
        }
    }
    let counts = scoring::token_count(&texts, scorer, tokenizer_id).await?;
    let mut grouped: BTreeMap<ExpressionLabel, Vec<usize>> = BTreeMap::new();
    for (label, c) in labels.into_iter().zip(counts) {
        grouped.entry(label).or_default().push(c);
    }
    let per_label = grouped
        .into_iter()
        .map(|(label, counts)| {
            let n = counts.len();
            let mean = counts.iter().sum::<usize>() as f64 / n as f64;
            let stddev = if n > 1 {
                (counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            let mut histogram = BTreeMap::new();
            for c in counts {
                *histogram.entry(c).or_default() += 1;
            }
            (label, LabelLengths { n, mean, stddev, histogram })
        })
        .collect();
    Ok(LengthSummary {
        tokenizer: tokenizer_id.to_string(),
        per_label,
    })
}

/// Writes `label,mean,stddev,n` to `figure1.csv` and
/// `label,tokens,count` to `figure1_histogram.csv` inside `dir`.
pub fn write_length_tables(summary: &LengthSummary, dir: &Path) -> Result<()> {
    let path = dir.join("figure1.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    w.write_record(["label", "mean", "stddev", "n"]).map_err(|e| csv_error(&path, e))?;
    for (label, l) in &summary.per_label {
        w.write_record([
            label.as_str().to_string(),
            format!("{:.4}", l.mean),
            format!("{:.4}", l.stddev),
            l.n.to_string(),
        ])
        .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("figure1_histogram.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    w.write_record(["label", "tokens", "count"]).map_err(|e| csv_error(&path, e))?;
    for (label, l) in &summary.per_label {
        for (tokens, count) in &l.histogram {
            w.write_record([label.as_str().to_string(), tokens.to_string(), count.to_string()])
                .map_err(|e| csv_error(&path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}
