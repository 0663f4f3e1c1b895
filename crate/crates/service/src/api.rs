//! HTTP routes.
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | GET | `/health` | | `{status, api_version, backend}` |
//! | POST | `/sessions` | [`SessionConfig`] | 201 [`PopulationView`](crate::views::PopulationView) |
//! | GET | `/sessions/{id}/population` | | `PopulationView` |
//! | POST | `/sessions/{id}/votes` | [`VoteRequest`] | `VoteResponse` |
//! | GET | `/sessions/{id}/stats?scope=voted\|population` | | `StatsView` |
//! | POST | `/sessions/{id}/finalize` | | `FinalizeResponse` |
//! | POST | `/sessions/{id}/sample` | [`SampleRequest`] | `SampleResponse` |
//! | POST | `/models/sample` | `SampleRequest` with `model` | `SampleResponse` |
//! | GET | `/images/{hash}` | | image bytes |
//!
//! Errors are `application/problem+json` documents carrying a `code`.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use promptsteer_core::analytics::HistogramScope;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::views::{SampleRequest, VoteRequest, API_VERSION};
use crate::{Engine, ServiceError, SessionConfig};

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status =
            StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let mut resp = (status, Json(self.problem())).into_response();
        resp.headers_mut().insert(
            header::CONTENT_TYPE,
            HeaderValue::from_static("application/problem+json"),
        );
        resp
    }
}

type Shared = Arc<Engine>;

async fn blocking<T, F>(engine: &Shared, f: F) -> Result<T, ServiceError>
where
    T: Send + 'static,
    F: FnOnce(&Engine) -> Result<T, ServiceError> + Send + 'static,
{
    let engine = engine.clone();
    tokio::task::spawn_blocking(move || f(&engine))
        .await
        .map_err(|e| ServiceError::Storage(format!("worker failed: {e}")))?
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ServiceError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ServiceError::Validation(e.body_text()))
}

#[derive(Serialize)]
struct HealthBody {
    status: &'static str,
    api_version: u32,
    backend: promptsteer_render::Health,
}

async fn health(State(engine): State<Shared>) -> Json<HealthBody> {
    Json(HealthBody {
        status: "ok",
        api_version: API_VERSION,
        backend: engine.health(),
    })
}

async fn create(
    State(engine): State<Shared>,
    payload: Result<Json<SessionConfig>, JsonRejection>,
) -> Result<impl IntoResponse, ServiceError> {
    let cfg = body(payload)?;
    let view = blocking(&engine, move |e| e.create_session(cfg)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn population(
    State(engine): State<Shared>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(blocking(&engine, move |e| e.population(&id)).await?))
}

async fn votes(
    State(engine): State<Shared>,
    Path(id): Path<String>,
    payload: Result<Json<VoteRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ServiceError> {
    let req = body(payload)?;
    Ok(Json(
        blocking(&engine, move |e| e.submit_votes(&id, req)).await?,
    ))
}

#[derive(Deserialize)]
struct StatsQuery {
    #[serde(default)]
    scope: HistogramScope,
}

async fn stats(
    State(engine): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<StatsQuery>,
) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(
        blocking(&engine, move |e| e.stats(&id, q.scope)).await?,
    ))
}

async fn finalize(
    State(engine): State<Shared>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(blocking(&engine, move |e| e.finalize(&id)).await?))
}

async fn sample(
    State(engine): State<Shared>,
    Path(id): Path<String>,
    payload: Result<Json<SampleRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ServiceError> {
    let req = body(payload)?;
    Ok(Json(
        blocking(&engine, move |e| e.sample(Some(&id), req)).await?,
    ))
}

async fn sample_model(
    State(engine): State<Shared>,
    payload: Result<Json<SampleRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ServiceError> {
    let req = body(payload)?;
    Ok(Json(blocking(&engine, move |e| e.sample(None, req)).await?))
}

async fn image(
    State(engine): State<Shared>,
    Path(hash): Path<String>,
) -> Result<impl IntoResponse, ServiceError> {
    let img = blocking(&engine, move |e| e.image(&hash)).await?;
    Ok((
        [
            (header::CONTENT_TYPE, img.media_type),
            (
                header::CACHE_CONTROL,
                "public, max-age=31536000, immutable".to_string(),
            ),
        ],
        img.bytes,
    ))
}

async fn fallback(uri: axum::http::Uri) -> ServiceError {
    ServiceError::RouteNotFound(uri.path().to_string())
}

/// The API, plus static files from `static_dir` for everything unrouted.
pub fn router(engine: Arc<Engine>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create))
        .route("/sessions/{id}/population", get(population))
        .route("/sessions/{id}/votes", post(votes))
        .route("/sessions/{id}/stats", get(stats))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/sessions/{id}/sample", post(sample))
        .route("/models/sample", post(sample_model))
        .route("/images/{hash}", get(image));
    let api = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(fallback),
    };
    api.with_state(engine)
}

/// Serves on `listener` until the process receives ctrl-c.
pub async fn serve(
    engine: Arc<Engine>,
    listener: tokio::net::TcpListener,
    static_dir: Option<PathBuf>,
) -> std::io::Result<()> {
    axum::serve(listener, router(engine, static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
