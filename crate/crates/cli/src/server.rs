//! HTTP generation service.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use guilget_core::ag::GuiAg;
use guilget_core::metrics::layout_metrics;
use guilget_core::model::{generate_layouts, GenerateOptions, Model};
use guilget_core::Error as CoreError;

use crate::api::{GenerateResponse, GeneratedLayout, LayoutDoc, Vocab};

pub const MAX_SAMPLES: usize = 16;

/// The loaded model is read-only; every request draws from its own seed.
#[derive(Clone)]
pub struct AppState {
    pub model: Arc<Model>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn unprocessable(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::UnknownClass(_)
            | CoreError::UnknownPredicate(_)
            | CoreError::InvalidGraph(_)
            | CoreError::Json(_) => ApiError::bad_request("invalid_graph", e.to_string()),
            CoreError::SequenceTooLong { .. } | CoreError::NoComponents => {
                ApiError::unprocessable("graph_too_large", e.to_string())
            }
            CoreError::Config(_) => ApiError::unprocessable("invalid_parameter", e.to_string()),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
        }
    }
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/vocab", get(vocab))
        .route("/api/generate", post(generate))
        .route("/api/metrics", post(metrics))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(model: Model, port: u16, static_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let state = AppState {
        model: Arc::new(model),
    };
    let app = router(state, static_dir);
    let addr = SocketAddr::from(([0, 0, 0, 0], port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok", "version": env!("CARGO_PKG_VERSION")}))
}

async fn vocab() -> Json<Vocab> {
    Json(Vocab::current())
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("invalid_json", e.to_string()))
}

fn parse_graph(v: serde_json::Value) -> Result<GuiAg, ApiError> {
    GuiAg::from_json_value(v).map_err(|e| ApiError::bad_request("invalid_graph", e.to_string()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateRequest {
    graph: serde_json::Value,
    #[serde(default = "one")]
    samples: usize,
    #[serde(default)]
    temperature: f64,
    seed: Option<u64>,
}

fn one() -> usize {
    1
}

async fn generate(
    State(state): State<AppState>,
    body: Bytes,
) -> Result<Json<GenerateResponse>, ApiError> {
    let req: GenerateRequest = parse_body(&body)?;
    let ag = parse_graph(req.graph)?;
    if req.samples == 0 || req.samples > MAX_SAMPLES {
        return Err(ApiError::unprocessable(
            "invalid_samples",
            format!("samples must be between 1 and {MAX_SAMPLES}"),
        ));
    }
    if !(req.temperature.is_finite() && req.temperature >= 0.0) {
        return Err(ApiError::unprocessable(
            "invalid_temperature",
            "temperature must be finite and ≥ 0",
        ));
    }
    let seed = req.seed.unwrap_or_else(rand::random);
    let opts = GenerateOptions {
        samples: req.samples,
        temperature: req.temperature,
        seed,
    };
    let model = state.model.clone();
    let layouts =
        tokio::task::spawn_blocking(move || -> Result<Vec<GeneratedLayout>, CoreError> {
            let layouts = generate_layouts(&model, &ag, &opts)?;
            Ok(layouts
                .iter()
                .map(|l| GeneratedLayout {
                    boxes: LayoutDoc::from_layout(l).boxes,
                    metrics: layout_metrics(&ag, l),
                })
                .collect())
        })
        .await
        .map_err(|e| {
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
        })??;
    Ok(Json(GenerateResponse { seed, layouts }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricsRequest {
    graph: serde_json::Value,
    layout: LayoutDoc,
}

async fn metrics(body: Bytes) -> Result<Json<guilget_core::metrics::LayoutMetrics>, ApiError> {
    let req: MetricsRequest = parse_body(&body)?;
    let ag = parse_graph(req.graph)?;
    if req.layout.boxes.is_empty() {
        return Err(ApiError::unprocessable(
            "empty_layout",
            "layout has no boxes",
        ));
    }
    let layout = req
        .layout
        .to_layout(&ag)
        .map_err(|m| ApiError::unprocessable("invalid_layout", m))?;
    Ok(Json(layout_metrics(&ag, &layout)))
}
