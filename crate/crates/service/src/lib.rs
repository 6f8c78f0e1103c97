//! Low-latency verification endpoint around a loaded [`VerifierModel`].
//!
//! `POST /v1/verify` accepts either a raw model completion (parsed and
//! embedded server-side) or a precomputed 391-value feature row and returns
//! the flawed-trace probability. `GET /healthz` reports the loaded model's
//! digest. The model is installed once and never mutated, so handlers share
//! it without locking.

use std::net::SocketAddr;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ris_core::features::{
    fallback_embed, split_raw, structural_features, FeatureVector, StructuralFeatures, FEATURE_DIM,
};
use ris_core::trace::{extract_final_answer, parse_steps};
use ris_core::verifier::{self, VerifierModel};
use ris_core::{Condition, Dataset, ReasoningTrace};
use ris_gateway::EmbeddingClient;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

struct Loaded {
    model: VerifierModel,
    digest: String,
}

/// Shared handler state. Cloning is cheap; all clones see the same model.
#[derive(Clone)]
pub struct ServiceState {
    model: Arc<OnceLock<Loaded>>,
    started: Instant,
    embedder: Option<EmbeddingClient>,
}

impl Default for ServiceState {
    fn default() -> Self {
        ServiceState { model: Arc::new(OnceLock::new()), started: Instant::now(), embedder: None }
    }
}

impl ServiceState {
    /// State with no model yet; every verify request answers 503 until
    /// [`ServiceState::install`] succeeds.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Routes raw-output requests through an embedding provider instead of
    /// the built-in hashing embedder.
    pub fn with_embedder(mut self, embedder: EmbeddingClient) -> Self {
        self.embedder = Some(embedder);
        self
    }

    /// Installs the model. Returns `false` if one was already installed.
    pub fn install(&self, model: VerifierModel, digest: String) -> bool {
        self.model.set(Loaded { model, digest }).is_ok()
    }

    /// Loads a model file and installs it, using its header digest.
    pub fn load(&self, path: &std::path::Path) -> Result<String, verifier::VerifierError> {
        let (model, header) = verifier::load(path)?;
        let digest = header.param_digest.clone();
        if !self.install(model, digest.clone()) {
            warn!("a model was already installed; keeping it");
        }
        Ok(digest)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyRequest {
    #[serde(default)]
    pub raw_output: Option<String>,
    /// Unnormalized row: 384 embedding values then the 7 structural metrics.
    #[serde(default)]
    pub features: Option<Vec<f64>>,
    #[serde(default)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyResponse {
    pub probability: f64,
    pub flagged: bool,
    pub threshold: f64,
    pub structural_features: StructuralFeatures,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub model_digest: String,
    pub uptime_s: f64,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

fn unprocessable(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::UNPROCESSABLE_ENTITY, msg.into())
}

fn unloaded() -> ApiError {
    ApiError(StatusCode::SERVICE_UNAVAILABLE, "model not loaded".into())
}

/// A trace built from a bare completion; there is no record to grade against.
fn request_trace(raw_output: String) -> ReasoningTrace {
    ReasoningTrace {
        record_id: "request".into(),
        dataset: Dataset::Other,
        model: String::new(),
        condition: Condition::Baseline,
        steps: parse_steps(&raw_output),
        final_answer: extract_final_answer(&raw_output),
        answer_correct: None,
        raw_output,
    }
}

async fn verify(State(state): State<ServiceState>, body: Bytes) -> Result<Json<VerifyResponse>, ApiError> {
    let start = Instant::now();
    let loaded = state.model.get().ok_or_else(unloaded)?;
    let req: VerifyRequest = serde_json::from_slice(&body).map_err(|e| bad_request(format!("malformed body: {e}")))?;
    let threshold = match req.threshold {
        None => loaded.model.decision_threshold,
        Some(t) if (0.0..=1.0).contains(&t) => t,
        Some(t) => return Err(unprocessable(format!("threshold {t} outside [0, 1]"))),
    };

    let (features, structural): (FeatureVector, StructuralFeatures) = match (req.raw_output, req.features) {
        (Some(_), Some(_)) | (None, None) => {
            return Err(bad_request("exactly one of `raw_output` and `features` is required"))
        }
        (None, Some(row)) => {
            if row.len() != FEATURE_DIM {
                return Err(unprocessable(format!("expected {FEATURE_DIM} features, got {}", row.len())));
            }
            let (_, structural) = split_raw(&row).expect("length checked");
            let fv = loaded.model.normalize_raw(&row).map_err(|e| unprocessable(e.to_string()))?;
            (fv, structural)
        }
        (Some(raw), None) => {
            let embedding = match &state.embedder {
                Some(client) => client
                    .fetch_embedding(std::slice::from_ref(&raw))
                    .await
                    .map_err(|e| ApiError(StatusCode::BAD_GATEWAY, format!("embedding provider: {e}")))?
                    .pop()
                    .expect("one vector per text"),
                None => fallback_embed(&raw),
            };
            let structural = structural_features(&request_trace(raw));
            let row = ris_core::features::raw_row(&embedding, &structural);
            let fv = loaded.model.normalize_raw(&row).map_err(|e| unprocessable(e.to_string()))?;
            (fv, structural)
        }
    };
    let prediction = loaded.model.predict(&features, Some(threshold));
    Ok(Json(VerifyResponse {
        probability: prediction.probability,
        flagged: prediction.flagged,
        threshold,
        structural_features: structural,
        latency_ms: start.elapsed().as_secs_f64() * 1e3,
    }))
}

async fn healthz(State(state): State<ServiceState>) -> Result<Json<Health>, ApiError> {
    let loaded = state.model.get().ok_or_else(unloaded)?;
    Ok(Json(Health { model_digest: loaded.digest.clone(), uptime_s: state.started.elapsed().as_secs_f64() }))
}

pub fn router(state: ServiceState) -> Router {
    Router::new().route("/v1/verify", post(verify)).route("/healthz", get(healthz)).with_state(state)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: ServiceState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let addr: SocketAddr = listener.local_addr()?;
    info!(%addr, "verify service listening");
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
