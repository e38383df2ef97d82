//! JSON-over-HTTP facade for gap prediction and candidate ranking.
//!
//! | method | path       | body                                   |
//! |--------|------------|----------------------------------------|
//! | GET    | `/models`  |                                        |
//! | POST   | `/predict` | `{model_id, text, k?}`                 |
//! | POST   | `/rank`    | `{model_id, text, candidates}`         |
//!
//! Every error response carries `{code, message, detail}`. The model set is
//! fixed when the router is built and never mutated by requests.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use lacuna_core::checkpoint::Checkpoint;
use lacuna_core::corpus::Sentence;
use lacuna_core::model::ModelConfig;
use lacuna_core::rank::{self, PositionPrediction, RankError, RankedCandidate};

pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    pub detail: Option<String>,
}

/// An [`ApiError`] together with its HTTP status.
#[derive(Debug)]
pub struct ErrorResponse(pub StatusCode, pub ApiError);

impl ErrorResponse {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ErrorResponse(
            status,
            ApiError {
                code: code.to_string(),
                message: message.into(),
                detail: None,
            },
        )
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.1.detail = Some(detail.into());
        self
    }
}

impl IntoResponse for ErrorResponse {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

impl From<RankError> for ErrorResponse {
    fn from(e: RankError) -> Self {
        let code = match &e {
            RankError::NoGapPresent => "NoGapPresent",
            RankError::MultipleGaps(_) => "MultipleGaps",
            RankError::NoCandidates => "NoCandidates",
            RankError::DuplicateCandidate(_) => "DuplicateCandidate",
            RankError::MixedCandidateLengths(_) => "MixedCandidateLengths",
            RankError::LengthMismatch { .. } => "LengthMismatch",
            RankError::UnknownCharacter { .. } => "UnknownCharacter",
            RankError::Model(_) => "ModelError",
        };
        let status = match e {
            RankError::Model(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ErrorResponse::new(status, code, e.to_string())
    }
}

impl From<JsonRejection> for ErrorResponse {
    fn from(e: JsonRejection) -> Self {
        ErrorResponse::new(e.status(), "BadRequest", "malformed request body")
            .with_detail(e.body_text())
    }
}

/// A checkpoint served under `id`.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub id: String,
    pub checkpoint: Checkpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub masking: Option<String>,
    pub config: ModelConfig,
    pub dev_accuracy: f64,
    pub epoch: u32,
    pub vocab_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub model_id: String,
    pub text: String,
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub filled_text: String,
    pub positions: Vec<PositionPrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRequest {
    pub model_id: String,
    pub text: String,
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankResponse {
    pub ranked: Vec<RankedCandidate>,
}

/// Allowed browser origins; `None` allows any.
#[derive(Debug, Clone, Default)]
pub struct CorsConfig {
    pub origins: Option<Vec<String>>,
}

type Models = Arc<BTreeMap<String, Checkpoint>>;

fn lookup<'a>(models: &'a Models, id: &str) -> Result<&'a Checkpoint, ErrorResponse> {
    models.get(id).ok_or_else(|| {
        ErrorResponse::new(
            StatusCode::NOT_FOUND,
            "UnknownModel",
            format!("no model with id {id:?}"),
        )
    })
}

fn parse_query(text: &str) -> Result<Sentence, ErrorResponse> {
    Sentence::parse("query", "request", text)
        .map_err(|e| ErrorResponse::new(StatusCode::BAD_REQUEST, "MarkupError", e.to_string()))
}

async fn list_models(State(models): State<Models>) -> Json<Vec<ModelInfo>> {
    Json(
        models
            .iter()
            .map(|(id, c)| ModelInfo {
                id: id.clone(),
                masking: c.meta.masking.clone(),
                config: c.model.config.clone(),
                dev_accuracy: c.meta.dev_accuracy,
                epoch: c.meta.epoch,
                vocab_size: c.vocab.len(),
            })
            .collect(),
    )
}

async fn predict(
    State(models): State<Models>,
    body: Result<Json<PredictRequest>, JsonRejection>,
) -> Result<Json<PredictResponse>, ErrorResponse> {
    let Json(req) = body?;
    lookup(&models, &req.model_id)?;
    let sentence = parse_query(&req.text)?;
    let k = req.k.unwrap_or(DEFAULT_TOP_K);
    let (filled_text, positions) = tokio::task::spawn_blocking(move || {
        let c = &models[&req.model_id];
        rank::predict(&sentence, &c.model, &c.vocab, k)
    })
    .await
    .map_err(internal)??;
    Ok(Json(PredictResponse {
        filled_text,
        positions,
    }))
}

async fn rank_candidates(
    State(models): State<Models>,
    body: Result<Json<RankRequest>, JsonRejection>,
) -> Result<Json<RankResponse>, ErrorResponse> {
    let Json(req) = body?;
    lookup(&models, &req.model_id)?;
    let sentence = parse_query(&req.text)?;
    let ranked = tokio::task::spawn_blocking(move || {
        let c = &models[&req.model_id];
        rank::rank_candidates(&sentence, &req.candidates, &c.model, &c.vocab)
    })
    .await
    .map_err(internal)??;
    Ok(Json(RankResponse { ranked }))
}

fn internal(e: tokio::task::JoinError) -> ErrorResponse {
    ErrorResponse::new(
        StatusCode::INTERNAL_SERVER_ERROR,
        "InternalError",
        e.to_string(),
    )
}

async fn not_found() -> ErrorResponse {
    ErrorResponse::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint")
}

async fn method_not_allowed() -> ErrorResponse {
    ErrorResponse::new(
        StatusCode::METHOD_NOT_ALLOWED,
        "MethodNotAllowed",
        "method not allowed for this endpoint",
    )
}

fn cors_layer(cfg: &CorsConfig) -> CorsLayer {
    let base = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    match &cfg.origins {
        None => base.allow_origin(Any),
        Some(list) => base.allow_origin(AllowOrigin::list(
            list.iter().filter_map(|o| HeaderValue::from_str(o).ok()),
        )),
    }
}

/// Builds the application. Model ids must be unique; later duplicates
/// replace earlier ones.
pub fn router(models: Vec<LoadedModel>, cors: &CorsConfig) -> Router {
    let models: Models = Arc::new(models.into_iter().map(|m| (m.id, m.checkpoint)).collect());
    Router::new()
        .route("/models", get(list_models))
        .route("/predict", post(predict))
        .route("/rank", post(rank_candidates))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .layer(cors_layer(cors))
        .with_state(models)
}

/// Serves `app` until the process is stopped.
pub async fn serve(app: Router, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await
}
