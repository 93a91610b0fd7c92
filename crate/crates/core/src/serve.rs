//! HTTP servers exposing any [`Scorer`] or [`GenerationBackend`] over the wire protocol.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use crate::error::{Error, Result};
use crate::genpipe::GenerationBackend;
use crate::scoring::{Scorer, TokenizerId};
use crate::wire::*;

/// Largest batch accepted by the scorer endpoints; larger batches get HTTP 413.
pub const MAX_BATCH: usize = 256;

struct ApiError(StatusCode, ErrorBody);

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        ApiError(status, ErrorBody { error: error.into(), param: None })
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::RejectedParameter { param, message } => ApiError(
                StatusCode::BAD_REQUEST,
                ErrorBody { error: message, param: Some(param) },
            ),
            e @ (Error::Argument(_) | Error::Config(_)) => ApiError::new(StatusCode::BAD_REQUEST, e.to_string()),
            e @ Error::Protocol { .. } => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
            e => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

fn check_batch(texts: &[String]) -> std::result::Result<(), ApiError> {
    if texts.is_empty() {
        return Err(ApiError(
            StatusCode::BAD_REQUEST,
            ErrorBody { error: "texts must not be empty".into(), param: Some("texts".into()) },
        ));
    }
    if texts.len() > MAX_BATCH {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("batch of {} exceeds the maximum of {MAX_BATCH}", texts.len()),
        ));
    }
    Ok(())
}

type SharedScorer = Arc<dyn Scorer>;

async fn sentiment(State(s): State<SharedScorer>, Json(req): Json<TextsRequest>) -> ApiResult<SentimentResponse> {
    check_batch(&req.texts)?;
    let scores = s.sentiment(&req.texts).await?;
    Ok(Json(SentimentResponse {
        probs: scores.iter().map(|p| p.probs().to_vec()).collect(),
    }))
}

async fn embed(State(s): State<SharedScorer>, Json(req): Json<TextsRequest>) -> ApiResult<EmbedResponse> {
    check_batch(&req.texts)?;
    let vectors = s.embed(&req.texts).await?;
    Ok(Json(EmbedResponse {
        dim: vectors.first().map_or(0, |v| v.dim()),
        vectors: vectors.iter().map(|v| v.as_slice().to_vec()).collect(),
    }))
}

async fn tokenize(State(s): State<SharedScorer>, Json(req): Json<TokenizeRequest>) -> ApiResult<TokenizeResponse> {
    check_batch(&req.texts)?;
    let tokenizer: TokenizerId = req.tokenizer.parse().map_err(|e: Error| ApiError(
        StatusCode::BAD_REQUEST,
        ErrorBody { error: e.to_string(), param: Some("tokenizer".into()) },
    ))?;
    let counts = s.tokenize(&req.texts, tokenizer).await?;
    Ok(Json(TokenizeResponse {
        counts: counts.into_iter().map(|c| c as u64).collect(),
    }))
}

pub fn scorer_router(scorer: Arc<dyn Scorer>) -> Router {
    Router::new()
        .route(SENTIMENT_PATH, post(sentiment))
        .route(EMBED_PATH, post(embed))
        .route(TOKENIZE_PATH, post(tokenize))
        .with_state(scorer)
}

type SharedBackend = Arc<dyn GenerationBackend>;

async fn complete(State(b): State<SharedBackend>, Json(req): Json<CompleteRequest>) -> ApiResult<CompleteResponse> {
    Ok(Json(CompleteResponse { text: b.complete(&req).await? }))
}

async fn completions(State(b): State<SharedBackend>, Json(req): Json<CompletionsRequest>) -> ApiResult<CompletionsResponse> {
    if req.n != 1 {
        return Err(Error::RejectedParameter {
            param: "n".into(),
            message: format!("only n=1 is supported, got {}", req.n),
        }
        .into());
    }
    let request = CompleteRequest {
        prompt: req.prompt,
        top_p: req.top_p,
        top_k: req.top_k,
        repetition_penalty: req.repetition_penalty,
        max_tokens: req.max_tokens,
        seed: req.seed,
    };
    let text = b.complete(&request).await?;
    Ok(Json(CompletionsResponse { choices: vec![CompletionChoice { text }] }))
}

/// Serves both generation dialects.
pub fn backend_router(backend: Arc<dyn GenerationBackend>) -> Router {
    Router::new()
        .route(COMPLETE_PATH, post(complete))
        .route(COMPLETIONS_PATH, post(completions))
        .with_state(backend)
}

/// A server running on a background task; stopped when dropped.
pub struct Served {
    pub addr: SocketAddr,
    handle: JoinHandle<()>,
}

impl Served {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for Served {
    fn drop(&mut self) {
        self.handle.abort();
    }
}

/// Binds `router` to an ephemeral loopback port.
pub async fn spawn(router: Router) -> Result<Served> {
    let listener = TcpListener::bind("127.0.0.1:0")
        .await
        .map_err(|e| Error::io("127.0.0.1:0", e))?;
    let addr = listener.local_addr().map_err(|e| Error::io("127.0.0.1:0", e))?;
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, router).await {
            tracing::error!("server stopped: {e}");
        }
    });
    Ok(Served { addr, handle })
}

/// Serves `router` on `addr` until the process ends.
pub async fn serve(router: Router, addr: SocketAddr) -> Result<()> {
    let listener = TcpListener::bind(addr).await.map_err(|e| Error::io(addr.to_string(), e))?;
    tracing::info!("listening on {}", listener.local_addr().map_err(|e| Error::io(addr.to_string(), e))?);
    axum::serve(listener, router).await.map_err(|e| Error::io(addr.to_string(), e))
}
