use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use exleak::dataset::demo_dataset;
use exleak::genpipe::{read_checkpoint, run_generation, Dialect, GenerationBackend, HttpBackend, StubBackend};
use exleak::retry::RetryPolicy;
use exleak::scoring::{self, HttpScorer, Scorer, StubScorer, TokenizerId};
use exleak::serve::{backend_router, scorer_router, spawn, MAX_BATCH};
use exleak::types::GenerationConfig;
use exleak::wire::{CompleteRequest, EmbedResponse, SentimentResponse, TextsRequest};
use exleak::Error;
use serde_json::json;

fn fast_retry(max_retries: u32) -> RetryPolicy {
    RetryPolicy {
        max_retries,
        initial_backoff: Duration::from_millis(5),
        max_backoff: Duration::from_millis(20),
        request_timeout: Duration::from_secs(5),
    }
}

fn texts(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

async fn serve_json(path: &'static str, body: serde_json::Value) -> exleak::serve::Served {
    let router = Router::new().route(path, post(move || async move { Json(body) }));
    spawn(router).await.unwrap()
}

#[tokio::test]
async fn stub_scorer_round_trips_over_http() {
    let srv = spawn(scorer_router(Arc::new(StubScorer::new()))).await.unwrap();
    let client = HttpScorer::new(srv.base_url(), RetryPolicy::none());
    let batch = texts(&["I love this wonderful day", "The bus is late.", "This is absolutely terrible and awful."]);
    let scores = client.sentiment(&batch).await.unwrap();
    let labels: Vec<String> = scores.iter().map(|s| s.argmax().to_string()).collect();
    assert_eq!(labels, ["positive", "neutral", "negative"]);
    let counts = client.tokenize(&texts(&["hello world"]), TokenizerId::Gpt2).await.unwrap();
    assert_eq!(counts, [2]);
    let local = scoring::token_count(&texts(&["a b  c"]), Some(&client), "whitespace").await.unwrap();
    assert_eq!(local, [3]);
}

#[tokio::test]
async fn empty_text_is_uniform_without_a_call() {
    // No server at all: empty texts must never reach the wire.
    let client = HttpScorer::new("http://127.0.0.1:9", RetryPolicy::none());
    let scores = scoring::sentiment(&texts(&["", ""]), &client).await.unwrap();
    assert!(scores.iter().all(|s| s.probs() == [1.0 / 3.0; 3]));
}

#[tokio::test]
async fn oversized_batch_gets_413() {
    let srv = spawn(scorer_router(Arc::new(StubScorer::new()))).await.unwrap();
    let resp = reqwest::Client::new()
        .post(format!("{}/v1/embed", srv.base_url()))
        .json(&TextsRequest { texts: vec!["x".into(); MAX_BATCH + 1] })
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::PAYLOAD_TOO_LARGE);
    let body: serde_json::Value = resp.json().await.unwrap();
    assert!(body["error"].as_str().unwrap().contains(&MAX_BATCH.to_string()));
}

#[tokio::test]
async fn mixed_dimensions_are_a_protocol_error() {
    let srv = serve_json("/v1/embed", json!({"vectors": [[1.0, 0.0], [1.0, 0.0, 0.0]], "dim": 2})).await;
    let client = HttpScorer::new(srv.base_url(), RetryPolicy::none());
    let err = client.embed(&texts(&["a", "b"])).await.unwrap_err();
    assert!(matches!(err, Error::Protocol { .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[tokio::test]
async fn dimension_drift_between_calls_is_a_protocol_error() {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    let router = Router::new().route(
        "/v1/embed",
        post(move |Json(req): Json<TextsRequest>| {
            let dim = if c.fetch_add(1, Ordering::SeqCst) == 0 { 2 } else { 3 };
            async move {
                Json(EmbedResponse {
                    vectors: req.texts.iter().map(|_| vec![1.0; dim]).collect(),
                    dim,
                })
            }
        }),
    );
    let srv = spawn(router).await.unwrap();
    let client = HttpScorer::new(srv.base_url(), RetryPolicy::none());
    client.embed(&texts(&["a"])).await.unwrap();
    assert!(matches!(client.embed(&texts(&["a"])).await, Err(Error::Protocol { .. })));
}

#[tokio::test]
async fn bad_sentiment_rows_are_protocol_errors() {
    for body in [
        json!({"probs": [[0.5, 0.5]]}),
        json!({"probs": [[0.5, 0.5, 0.5]]}),
        json!({"probs": [[1.2, -0.1, -0.1]]}),
        json!({"probs": []}),
        json!({"scores": [[0.2, 0.3, 0.5]]}),
    ] {
        let srv = serve_json("/v1/sentiment", body.clone()).await;
        let client = HttpScorer::new(srv.base_url(), RetryPolicy::none());
        let err = client.sentiment(&texts(&["x"])).await.unwrap_err();
        assert!(matches!(err, Error::Protocol { .. }), "{body}: {err}");
    }
}

#[tokio::test]
async fn zero_embedding_is_a_protocol_error() {
    let srv = serve_json("/v1/embed", json!({"vectors": [[0.0, 0.0]], "dim": 2})).await;
    let client = HttpScorer::new(srv.base_url(), RetryPolicy::none());
    assert!(matches!(client.embed(&texts(&["x"])).await, Err(Error::Protocol { .. })));
}

#[tokio::test]
async fn transient_failures_are_retried() {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    let router = Router::new().route(
        "/v1/sentiment",
        post(move |Json(req): Json<TextsRequest>| {
            let n = c.fetch_add(1, Ordering::SeqCst);
            async move {
                if n < 2 {
                    Err(StatusCode::SERVICE_UNAVAILABLE)
                } else {
                    Ok(Json(SentimentResponse { probs: req.texts.iter().map(|_| vec![0.2, 0.3, 0.5]).collect() }))
                }
            }
        }),
    );
    let srv = spawn(router).await.unwrap();
    let client = HttpScorer::new(srv.base_url(), fast_retry(3));
    let scores = client.sentiment(&texts(&["x"])).await.unwrap();
    assert_eq!(scores[0].probs(), [0.2, 0.3, 0.5]);
    assert_eq!(calls.load(Ordering::SeqCst), 3);

    calls.store(0, Ordering::SeqCst);
    let client = HttpScorer::new(srv.base_url(), fast_retry(1));
    let err = client.sentiment(&texts(&["x"])).await.unwrap_err();
    assert!(matches!(err, Error::Transport { attempts: 2, .. }), "{err}");
}

#[tokio::test]
async fn rejected_parameter_is_named_in_both_dialects() {
    let srv = spawn(backend_router(Arc::new(StubBackend::new().with_max_tokens_limit(64)))).await.unwrap();
    for dialect in [Dialect::Native, Dialect::Completions] {
        let b = HttpBackend::new(srv.base_url(), dialect, "m", RetryPolicy::none());
        let req = CompleteRequest {
            prompt: "Her passion is".into(),
            top_p: 0.9,
            top_k: 50,
            repetition_penalty: 1.1,
            max_tokens: 128,
            seed: 1,
        };
        let err = b.complete(&req).await.unwrap_err();
        match &err {
            Error::RejectedParameter { param, .. } => assert_eq!(param, "max_tokens"),
            other => panic!("{dialect:?}: {other}"),
        }
        assert_eq!(err.exit_code(), 2);
    }
}

#[tokio::test]
async fn http_backend_matches_in_process_stub() {
    let srv = spawn(backend_router(Arc::new(StubBackend::new().echo()))).await.unwrap();
    let local = StubBackend::new().echo();
    let req = CompleteRequest {
        prompt: "Complete the sentence: Her passion is".into(),
        top_p: 0.9,
        top_k: 50,
        repetition_penalty: 1.1,
        max_tokens: 128,
        seed: 42,
    };
    for dialect in [Dialect::Native, Dialect::Completions] {
        let b = HttpBackend::new(srv.base_url(), dialect, "m", RetryPolicy::none());
        assert_eq!(b.complete(&req).await.unwrap(), local.render(&req).unwrap());
    }
}

#[tokio::test]
async fn unreachable_backend_leaves_a_resumable_checkpoint() {
    // A backend that serves a fixed number of requests and then goes away.
    let budget = Arc::new(AtomicUsize::new(6));
    let stub = Arc::new(StubBackend::new());
    let b = budget.clone();
    let router = Router::new().route(
        "/v1/complete",
        post(move |Json(req): Json<CompleteRequest>| {
            let left = b.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |x| x.checked_sub(1)).is_ok();
            let out = stub.render(&req).unwrap();
            async move {
                if left {
                    Ok(Json(json!({"text": out})))
                } else {
                    Err(StatusCode::SERVICE_UNAVAILABLE)
                }
            }
        }),
    );
    let srv = spawn(router).await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("generations.jsonl");
    let cfg = GenerationConfig { samples_per_prompt: 2, ..Default::default() };
    let dataset = demo_dataset();

    let backend = HttpBackend::new(srv.base_url(), Dialect::Native, "m", fast_retry(1));
    let err = run_generation(&dataset, &cfg, &backend, &ckpt, 1).await.unwrap_err();
    assert!(matches!(err, Error::Transport { .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
    let saved = read_checkpoint(&ckpt).unwrap();
    assert_eq!(saved.len(), 6, "three finished prompts are checkpointed");

    // Closed port: connection refused, still a transport error.
    drop(srv);
    let dead = HttpBackend::new("http://127.0.0.1:9", Dialect::Native, "m", fast_retry(0));
    assert!(matches!(run_generation(&dataset, &cfg, &dead, &ckpt, 1).await, Err(Error::Transport { .. })));

    let local = StubBackend::new();
    let resumed = run_generation(&dataset, &cfg, &local, &ckpt, 2).await.unwrap();
    assert_eq!(resumed.resumed_prompts, 3);
    assert_eq!(local.calls(), 5 * 2);
    assert_eq!(resumed.records.len(), 16);
}
