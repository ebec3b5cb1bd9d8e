//! JSON-over-HTTP routes for [`Service`].

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use medconsult_core::pipeline::PipelineError;
use medconsult_core::eicl::EiclError;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::formats::TextRow;
use crate::service::Service;

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<Service>,
    pub admin_token: Option<String>,
    pub default_docs: Option<PathBuf>,
    pub default_aliases: Option<PathBuf>,
}

impl AppState {
    pub fn new(service: Arc<Service>) -> Self {
        AppState { service, admin_token: None, default_docs: None, default_aliases: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { code: code.into(), message: message.into() } }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        let (status, code) = match &e {
            Error::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            Error::UnknownTrace(_) => (StatusCode::NOT_FOUND, "unknown_trace"),
            Error::Pipeline(PipelineError::EmptyMessage) => (StatusCode::UNPROCESSABLE_ENTITY, "empty_message"),
            Error::Pipeline(PipelineError::Generation(EiclError::Backend { .. })) | Error::Backend(_) => {
                (StatusCode::BAD_GATEWAY, "backend_failure")
            }
            Error::Parse { .. } | Error::DuplicateId { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "parse_failure"),
            Error::PersonalIdentifier { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "personal_identifier"),
            Error::Validation(_)
            | Error::Metric(_)
            | Error::Corpus(_)
            | Error::Terms(_)
            | Error::Retrieval(_)
            | Error::Sentiment(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation"),
            Error::Io { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "io_failure"),
            Error::Storage(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage_failure"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, msg)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", r.body_text())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, Error> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MessageBody {
    pub text: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct IndexBody {
    #[serde(default)]
    pub docs_path: Option<PathBuf>,
    #[serde(default)]
    pub aliases_path: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalBody {
    pub predictions: Vec<TextRow>,
    pub references: Vec<TextRow>,
}

async fn create_session(State(st): State<AppState>) -> Result<(StatusCode, Json<CreatedSession>), ApiError> {
    let svc = st.service.clone();
    let session_id = blocking(move || svc.create_session()).await?;
    Ok((StatusCode::CREATED, Json(CreatedSession { session_id })))
}

async fn post_message(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<MessageBody>, JsonRejection>,
) -> ApiResult<medconsult_core::pipeline::TurnResult> {
    let Json(body) = body?;
    let svc = st.service.clone();
    Ok(Json(blocking(move || svc.post_message(&id, &body.text)).await?))
}

async fn get_session(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<crate::service::Transcript> {
    Ok(Json(st.service.get_transcript(&id)?))
}

async fn get_trace(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<medconsult_core::eicl::RegenerationTrace> {
    let svc = st.service.clone();
    Ok(Json(blocking(move || svc.get_trace(&id)).await?))
}

fn authorize(st: &AppState, headers: &HeaderMap) -> Result<(), ApiError> {
    let Some(token) = &st.admin_token else {
        return Err(ApiError::new(StatusCode::FORBIDDEN, "admin_disabled", "no admin token is configured"));
    };
    let given = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if given == Some(token.as_str()) {
        Ok(())
    } else {
        Err(ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong admin token"))
    }
}

async fn admin_index(
    State(st): State<AppState>,
    headers: HeaderMap,
    body: Result<Json<IndexBody>, JsonRejection>,
) -> ApiResult<crate::index_store::IndexSummary> {
    authorize(&st, &headers)?;
    let Json(body) = body?;
    let docs = body.docs_path.or(st.default_docs.clone());
    let aliases = body.aliases_path.or(st.default_aliases.clone());
    let (Some(docs), Some(aliases)) = (docs, aliases) else {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", "docs_path and aliases_path are required"));
    };
    let svc = st.service.clone();
    Ok(Json(blocking(move || svc.admin_build_index(&docs, &aliases)).await?))
}

async fn admin_eval(
    State(st): State<AppState>,
    headers: HeaderMap,
    body: Result<Json<EvalBody>, JsonRejection>,
) -> ApiResult<medconsult_core::metrics::MetricReport> {
    authorize(&st, &headers)?;
    let Json(body) = body?;
    let svc = st.service.clone();
    Ok(Json(blocking(move || svc.eval(&body.predictions, &body.references)).await?))
}

async fn health(State(st): State<AppState>) -> ApiResult<crate::service::Health> {
    let svc = st.service.clone();
    Ok(Json(blocking(move || Ok(svc.health())).await?))
}

/// Permissive CORS so a browser client on another origin can call the API.
async fn cors(req: Request, next: Next) -> Response {
    let mut resp = if req.method() == Method::OPTIONS {
        StatusCode::NO_CONTENT.into_response()
    } else {
        next.run(req).await
    };
    let h = resp.headers_mut();
    h.insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, HeaderValue::from_static("*"));
    h.insert(header::ACCESS_CONTROL_ALLOW_METHODS, HeaderValue::from_static("GET, POST, OPTIONS"));
    h.insert(header::ACCESS_CONTROL_ALLOW_HEADERS, HeaderValue::from_static("content-type, authorization"));
    resp
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/traces/{id}", get(get_trace))
        .route("/admin/index", post(admin_index))
        .route("/admin/eval", post(admin_eval))
        .route("/health", get(health))
        .fallback(not_found)
        .layer(middleware::from_fn(cors))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
