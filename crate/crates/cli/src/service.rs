//! HTTP service over one immutable model.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tower_http::services::ServeDir;

use crate::render::{layer_png, relight_png, Layer, RelightRequest};
use relume::relight::ObjectModel;
use relume::Error;

pub struct ServiceState {
    pub model: ObjectModel,
    /// Directory of static studio assets served under `/`.
    pub assets: Option<PathBuf>,
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::LightRecord(_) | Error::InvalidInput(_) | Error::Json(_) | Error::LightCoincident(_) => {
                StatusCode::BAD_REQUEST
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, self.1 + "\n").into_response()
    }
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

const PLACEHOLDER: &str = "<!doctype html>\n<title>relume</title>\n<p>Studio assets are not installed. \
The API is served under <code>/api/model</code>, <code>/api/relight</code> and <code>/api/layers/</code>.</p>\n";

pub fn router(state: Arc<ServiceState>) -> Router {
    let api = Router::new()
        .route("/api/model", get(model_info))
        .route("/api/relight", post(relight))
        .route("/api/layers/{name}", get(layer));
    match state.assets.clone() {
        Some(dir) => api.fallback_service(ServeDir::new(dir)).with_state(state),
        None => api.route("/", get(|| async { Html(PLACEHOLDER) })).with_state(state),
    }
}

/// Metadata record of the served model together with its fitted light.
pub fn model_record(model: &ObjectModel) -> serde_json::Value {
    let mut v = serde_json::to_value(&model.metadata).expect("metadata serializes");
    v["light"] = model.fitted_spec().to_value();
    v
}

async fn model_info(State(state): State<Arc<ServiceState>>) -> Json<serde_json::Value> {
    Json(model_record(&state.model))
}

async fn relight(State(state): State<Arc<ServiceState>>, body: Bytes) -> Result<Response, ApiError> {
    let text = std::str::from_utf8(&body).map_err(|_| ApiError(StatusCode::BAD_REQUEST, "body is not UTF-8".into()))?;
    let req = RelightRequest::from_json(text)?;
    let bytes = tokio::task::spawn_blocking(move || relight_png(&state.model, &req))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(png(bytes))
}

async fn layer(State(state): State<Arc<ServiceState>>, Path(name): Path<String>) -> Result<Response, ApiError> {
    let layer: Layer = name
        .parse()
        .map_err(|e: Error| ApiError(StatusCode::NOT_FOUND, e.to_string()))?;
    let bytes = tokio::task::spawn_blocking(move || layer_png(&state.model, layer))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(png(bytes))
}

/// Serves until the process is stopped.
pub async fn serve(state: ServiceState, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await
}
