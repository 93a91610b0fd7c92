//! Acceptance run: one PASS/FAIL line per criterion.

mod common;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use exleak::conformance::{backend_suite, scorer_suite};
use exleak::datagen::{generate_dataset, weighted_sample, DatagenConfig, ScoredSentence};
use exleak::genpipe::{clean_generation, Dialect, StubBackend};
use exleak::metrics::evaluate_scored;
use exleak::report::{cmd_run, RunOptions};
use exleak::scoring::{self, HttpScorer, Scorer, StubScorer};
use exleak::serve::{backend_router, scorer_router, spawn, MAX_BATCH};
use exleak::stats::{significance_gate, wilcoxon_one_sided};
use exleak::types::{Embedding, ExpressionLabel, GenerationConfig, SentimentScore};
use exleak::{Dataset, DatasetKind, PromptSample};
use exleak::dataset::Provenance;
use exleak::retry::RetryPolicy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Four samples with hand-set scores; six of the eight charged pairs put more
/// mass on the injected label in the test generations than in the control.
fn leakage_decision() -> Outcome {
    use ExpressionLabel::*;
    let ctl = [0.2, 0.6, 0.2];
    // (negative test, positive test) per sample; expected decision in comments.
    let tests: [([f64; 3], [f64; 3]); 4] = [
        ([0.5, 0.3, 0.2], [0.1, 0.3, 0.6]), // 1, 1
        ([0.4, 0.4, 0.2], [0.2, 0.4, 0.4]), // 1, 1
        ([0.3, 0.5, 0.2], [0.2, 0.6, 0.2]), // 1, 0 (equal)
        ([0.1, 0.7, 0.2], [0.1, 0.5, 0.4]), // 0 (lower), 1
    ];
    let expected_el = [[1, 1], [1, 1], [1, 0], [0, 1]];
    let hand_mu = expected_el.iter().flatten().sum::<u8>() as f64 / 8.0;

    let samples: Vec<PromptSample> = (0..4)
        .map(|i| {
            PromptSample::new(
                format!("s{i}"),
                format!("Stem {i} is"),
                vec![
                    (format!("Bad thing {i}."), Negative),
                    (format!("Plain thing {i}."), Neutral),
                    (format!("Good thing {i}."), Positive),
                ],
                Provenance::curated(),
            )
            .unwrap()
        })
        .collect();
    let dataset = Dataset::new("hand", DatasetKind::Curated, samples).map_err(err)?;
    let unit = Embedding::new(vec![1.0, 0.0]).unwrap();
    let score = |p: [f64; 3]| SentimentScore::new(p).unwrap();
    let mut records = Vec::new();
    for (i, (neg, pos)) in tests.iter().enumerate() {
        let id = format!("s{i}");
        for g in 0..2 {
            for (label, p) in [(None, ctl), (Some(Negative), *neg), (Some(Neutral), ctl), (Some(Positive), *pos)] {
                let mut r = common::record(&id, label, g, "text", Some(score(p)));
                r.embedding = Some(unit.clone());
                records.push(r);
            }
        }
    }
    let concepts: HashMap<String, Embedding> = dataset
        .samples()
        .iter()
        .flat_map(|s| s.tests().iter().map(|t| (t.injected_sentence().to_string(), unit.clone())))
        .collect();
    let eval = evaluate_scored(&dataset, &records, 2, &concepts).map_err(err)?;
    for (i, exp) in expected_el.iter().enumerate() {
        for (label, want) in [(Negative, exp[0]), (Positive, exp[1])] {
            let o = eval
                .outcomes
                .iter()
                .find(|o| o.sample_id == format!("s{i}") && o.label == label)
                .ok_or("missing outcome")?;
            check(o.el == want, || format!("s{i} {label}: el={} expected {want}", o.el))?;
        }
    }
    check(hand_mu == 0.75, || format!("hand count gives {hand_mu}"))?;
    check(eval.summary.mu_el == 0.75, || format!("mu_EL = {}", eval.summary.mu_el))?;
    Ok(format!("mu_EL = {} (6 of 8 pairs), equality pair el = 0", eval.summary.mu_el))
}

async fn identical_generations() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let mut lines = Vec::new();
    for (i, dataset) in [exleak::dataset::demo_dataset(), common::synthetic_dataset(60, 3)].iter().enumerate() {
        let opts = RunOptions {
            generation: GenerationConfig { samples_per_prompt: 5, ..Default::default() },
            ..Default::default()
        };
        let out = dir.path().join(format!("run{i}"));
        let r = cmd_run(dataset, &StubBackend::new().prompt_independent(), &StubScorer::new(), &opts, &out)
            .await
            .map_err(err)?;
        let s = &r.summary;
        check(s.mu_l == 0.5, || format!("{}: mu_L = {}", dataset.name(), s.mu_l))?;
        check(s.mu_el == 0.0, || format!("{}: mu_EL = {}", dataset.name(), s.mu_el))?;
        lines.push(format!("{}: mu_L = {}", dataset.name(), s.mu_l));
    }
    Ok(lines.join(", "))
}

/// Brute-force reference: plain average ranks and all 2^n sign patterns.
fn oracle_p(d: &[f64]) -> Option<f64> {
    let nz: Vec<f64> = d.iter().copied().filter(|x| *x != 0.0).collect();
    if nz.is_empty() {
        return None;
    }
    let ranks: Vec<f64> = nz
        .iter()
        .map(|x| {
            let below = nz.iter().filter(|y| y.abs() < x.abs()).count() as f64;
            let tied = nz.iter().filter(|y| y.abs() == x.abs()).count() as f64;
            below + (tied + 1.0) / 2.0
        })
        .collect();
    let w: f64 = nz.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let n = nz.len();
    let hits = (0u32..1 << n)
        .filter(|mask| {
            let s: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
            s >= w - 1e-9
        })
        .count();
    Some(hits as f64 / (1u64 << n) as f64)
}

fn signed_rank_oracle() -> Outcome {
    let start = Instant::now();
    let r = wilcoxon_one_sided(&[1.0, 2.0, 3.0, 4.0, 5.0]).map_err(err)?;
    check(r.p_value == 0.03125 && r.w_plus == 15.0, || format!("[1..5] gave p = {}", r.p_value))?;

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut compared = 0;
    let mut worst: f64 = 0.0;
    while compared < 1500 {
        let n = rng.gen_range(1..=12);
        let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-4i32..=4) as f64 * 0.5).collect();
        match (oracle_p(&d), wilcoxon_one_sided(&d)) {
            (None, Err(exleak::Error::Degenerate(_))) => {}
            (Some(p), Ok(got)) => {
                worst = worst.max((p - got.p_value).abs());
                check((p - got.p_value).abs() <= 1e-12, || format!("{d:?}: oracle {p} vs {}", got.p_value))?;
                compared += 1;
            }
            (o, g) => return Err(format!("{d:?}: oracle {o:?} vs {g:?}")),
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("{compared} cases, max |dp| = {worst:e}, [1..5] p = 0.03125"))
}

async fn null_calibration() -> Outcome {
    let start = Instant::now();
    let dataset = common::synthetic_dataset(1000, 11);
    let dir = tempfile::tempdir().map_err(err)?;
    let r = cmd_run(
        &dataset,
        &StubBackend::new(),
        &StubScorer::new().with_noise(0.3, 5),
        &RunOptions { max_in_flight: 16, batch_size: 256, ..Default::default() },
        dir.path(),
    )
    .await
    .map_err(err)?;
    let s = &r.summary;
    let elapsed = start.elapsed();
    check(s.n_el_pairs >= 500, || format!("only {} pairs", s.n_el_pairs))?;
    check((0.45..=0.55).contains(&s.mu_el), || format!("mu_EL = {}", s.mu_el))?;
    check(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("mu_EL = {:.4} over {} pairs in {:.1?}", s.mu_el, s.n_el_pairs, elapsed))
}

async fn detection_power() -> Outcome {
    let dataset = common::synthetic_dataset(100, 21);
    let dir = tempfile::tempdir().map_err(err)?;
    let r = cmd_run(&dataset, &StubBackend::new().leaky(), &StubScorer::new(), &RunOptions::default(), dir.path())
        .await
        .map_err(err)?;
    let s = &r.summary;
    let w = s.wilcoxon.as_ref().ok_or("no signed-rank result")?;
    check(s.mu_el >= 0.9, || format!("mu_EL = {}", s.mu_el))?;
    check(significance_gate(w, 0.001), || format!("p = {}", w.p_value))?;
    Ok(format!("mu_EL = {:.3}, p = {:.2e} over {} samples", s.mu_el, w.p_value, s.n_samples))
}

async fn datagen_determinism() -> Outcome {
    let corpus = common::corpus(200, 8);
    let cfg = DatagenConfig { m: 60, n: 50, k: 4, seed: 17, ..Default::default() };
    let scorer = StubScorer::new();
    let a = generate_dataset("aexl", &corpus, &scorer, &cfg, 4).await.map_err(err)?;
    let b = generate_dataset("aexl", &corpus, &scorer, &cfg, 1).await.map_err(err)?;
    let dir = tempfile::tempdir().map_err(err)?;
    let (pa, pb) = (dir.path().join("a.json"), dir.path().join("b.json"));
    exleak::dataset::save_dataset(&a.dataset, &pa).map_err(err)?;
    exleak::dataset::save_dataset(&b.dataset, &pb).map_err(err)?;
    check(std::fs::read(&pa).map_err(err)? == std::fs::read(&pb).map_err(err)?, || "dataset files differ".into())?;

    for s in a.dataset.samples() {
        let labels: Vec<_> = s.tests().iter().map(|t| t.label()).collect();
        check(labels == ExpressionLabel::ALL, || format!("{}: labels {labels:?}", s.id()))?;
        for t in s.tests() {
            let got = scorer.score_text(t.injected_sentence()).argmax();
            check(got == t.label(), || format!("{}: `{}` scores {got}", s.id(), t.injected_sentence()))?;
        }
    }

    let (pa_w, pb_w) = (0.6, 0.25);
    let mk = |t: &str, p: f64| ScoredSentence::new(t, SentimentScore::new([(1.0 - p) / 2.0, (1.0 - p) / 2.0, p]).unwrap());
    let pool = vec![mk("A", pa_w), mk("B", pb_w)];
    let seeds = 10_000u64;
    let mut hits = 0;
    for seed in 0..seeds {
        if weighted_sample(&pool, ExpressionLabel::Positive, 1, seed).map_err(err)?[0].text == "A" {
            hits += 1;
        }
    }
    let freq = hits as f64 / seeds as f64;
    let want = pa_w / (pa_w + pb_w);
    check((freq - want).abs() <= 0.01, || format!("frequency {freq} vs weight {want}"))?;
    Ok(format!(
        "{} samples, identical bytes, labels valid, draw frequency {freq:.4} vs {want:.4}",
        a.dataset.len()
    ))
}

fn cleaning_property() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let word = |rng: &mut ChaCha8Rng| -> String {
        let len = rng.gen_range(1..=9);
        let mut w: String = (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
        if rng.gen_bool(0.2) {
            w[..1].make_ascii_uppercase();
        }
        w
    };
    let mut checked = 0;
    let mut attempts = 0;
    while checked < 1000 {
        attempts += 1;
        let injected: Vec<String> = (0..rng.gen_range(2..8)).map(|_| word(&mut rng)).collect();
        let stem: Vec<String> = (0..rng.gen_range(1..5)).map(|_| word(&mut rng)).collect();
        let prompt = match rng.gen_range(0..3) {
            0 => stem.join(" "),
            1 => format!("Complete the sentence: {}. {}", injected.join(" "), stem.join(" ")),
            _ => format!("{}. {}", injected.join(" "), stem.join(" ")),
        };
        let mut body: Vec<String> = (0..rng.gen_range(1..10)).map(|_| word(&mut rng)).collect();
        if rng.gen_bool(0.3) {
            // Start with the prompt's last word to exercise partial-echo handling.
            body.insert(0, stem.last().unwrap().clone());
        }
        let end = ["", ".", "!", "?"][rng.gen_range(0..4)];
        let continuation = format!("{}{end}", body.join(" "));
        if continuation.to_lowercase().contains(&prompt.to_lowercase()) {
            continue;
        }
        let got = clean_generation(&format!("{prompt} {continuation}"), &prompt).text;
        check(got == continuation, || format!("prompt {prompt:?}: got {got:?}, expected {continuation:?}"))?;
        checked += 1;
    }
    Ok(format!("{checked} pairs ({} skipped as containing the prompt)", attempts - checked))
}

async fn protocol_conformance() -> Outcome {
    let stub = Arc::new(StubScorer::new());
    let scorer_srv = spawn(scorer_router(stub.clone())).await.map_err(err)?;
    let backend_srv = spawn(backend_router(Arc::new(StubBackend::new()))).await.map_err(err)?;
    let mut failures = Vec::new();
    let mut total = 0;
    let suites = [
        ("scorer", scorer_suite(&scorer_srv.base_url(), MAX_BATCH).await),
        ("backend/native", backend_suite(&backend_srv.base_url(), Dialect::Native).await),
        ("backend/completions", backend_suite(&backend_srv.base_url(), Dialect::Completions).await),
    ];
    for (suite, checks) in &suites {
        for c in checks {
            total += 1;
            if !c.passed() {
                failures.push(format!("{suite}: {c}"));
            }
        }
    }
    check(failures.is_empty(), || failures.join("; "))?;

    // The wire adds nothing: HTTP results equal in-process results.
    let client = HttpScorer::new(scorer_srv.base_url(), RetryPolicy::none());
    let texts: Vec<String> = common::corpus(30, 1);
    let remote = scoring::sentiment(&texts, &client).await.map_err(err)?;
    let local = scoring::sentiment(&texts, stub.as_ref()).await.map_err(err)?;
    check(remote == local, || "sentiment differs over the wire".into())?;
    let remote = client.embed(&texts).await.map_err(err)?;
    let local = stub.embed(&texts).await.map_err(err)?;
    check(remote == local, || "embeddings differ over the wire".into())?;
    Ok(format!("{total} checks across 3 suites"))
}

fn line(name: &str, started: Instant, outcome: Outcome) -> bool {
    let t = started.elapsed();
    match outcome {
        Ok(detail) => {
            println!("PASS  {name:<28} {detail} [{t:.2?}]");
            true
        }
        Err(e) => {
            println!("FAIL  {name:<28} {e} [{t:.2?}]");
            false
        }
    }
}

fn main() {
    let rt = tokio::runtime::Runtime::new().expect("runtime");
    let mut ok = true;
    println!("acceptance criteria");

    let t = Instant::now();
    ok &= line("leakage decision and rate", t, leakage_decision());
    let t = Instant::now();
    ok &= line("semantic leakage on ties", t, rt.block_on(identical_generations()));
    let t = Instant::now();
    ok &= line("signed-rank oracle", t, signed_rank_oracle());
    let t = Instant::now();
    ok &= line("null calibration", t, rt.block_on(null_calibration()));
    let t = Instant::now();
    ok &= line("detection power", t, rt.block_on(detection_power()));
    let t = Instant::now();
    ok &= line("datagen determinism", t, rt.block_on(datagen_determinism()));
    let t = Instant::now();
    ok &= line("echo cleaning property", t, cleaning_property());
    let t = Instant::now();
    ok &= line("protocol conformance", t, rt.block_on(protocol_conformance()));

    if !ok {
        std::process::exit(1);
    }
}
