//! HTTP API: document discovery, reports, registry actions and workflow triggers.
//!
//! Mutating endpoints require `Authorization: Bearer <token>`. Reads do too
//! unless public reads are enabled. Executions run on blocking worker threads;
//! at most `queue_capacity` of them are queued or running at once and further
//! submissions get 429.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use teiresias_core::codeanalysis::SourceOrigin;
use teiresias_core::discovery::{DiscoveryService, ServiceError};
use teiresias_core::inventory::{ExecutionRecord, Overrides, RegistryError, StoreError, Trigger};
use tokio::sync::{OwnedSemaphorePermit, Semaphore};
use tracing::{info, warn};

pub const LISTEN_ENV: &str = "TEIRESIAS_LISTEN";
pub const TOKEN_ENV: &str = "TEIRESIAS_TOKEN";
pub const STATE_DIR_ENV: &str = "TEIRESIAS_STATE_DIR";
pub const PUBLIC_READS_ENV: &str = "TEIRESIAS_PUBLIC_READS";
pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
/// Seconds a client should wait after a 429.
pub const RETRY_AFTER_SECS: u64 = 5;

#[derive(Debug, thiserror::Error)]
pub enum SetupError {
    #[error("{TOKEN_ENV} must be set to a non-empty token")]
    MissingToken,
    #[error("{LISTEN_ENV}: invalid socket address '{0}'")]
    InvalidListen(String),
    #[error("{PUBLIC_READS_ENV}: expected true or false, got '{0}'")]
    InvalidFlag(String),
}

#[derive(Debug, Clone)]
pub struct ServerSettings {
    pub listen: SocketAddr,
    pub token: String,
    pub public_reads: bool,
}

impl ServerSettings {
    /// Reads listen address, token and read policy from the environment.
    pub fn from_env() -> Result<Self, SetupError> {
        let token = std::env::var(TOKEN_ENV).unwrap_or_default();
        if token.trim().is_empty() {
            return Err(SetupError::MissingToken);
        }
        let listen = std::env::var(LISTEN_ENV).unwrap_or_else(|_| DEFAULT_LISTEN.to_string());
        let listen = listen.parse().map_err(|_| SetupError::InvalidListen(listen))?;
        let public_reads = match std::env::var(PUBLIC_READS_ENV).ok().as_deref() {
            None | Some("") | Some("0") | Some("false") => false,
            Some("1") | Some("true") => true,
            Some(other) => return Err(SetupError::InvalidFlag(other.to_string())),
        };
        Ok(Self {
            listen,
            token,
            public_reads,
        })
    }
}

/// `$TEIRESIAS_STATE_DIR`, else `~/.local/state/teiresias`, else `./.teiresias-state`.
pub fn default_state_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(STATE_DIR_ENV) {
        return PathBuf::from(dir);
    }
    match std::env::var_os("HOME") {
        Some(home) => PathBuf::from(home).join(".local").join("state").join("teiresias"),
        None => PathBuf::from(".teiresias-state"),
    }
}

#[derive(Debug, thiserror::Error)]
#[error("execution queue is full")]
pub struct QueueFull;

#[derive(Clone)]
pub struct AppState {
    service: Arc<DiscoveryService>,
    queue: Arc<Semaphore>,
    token: Arc<str>,
    public_reads: bool,
}

enum Work {
    Scan(Vec<SourceOrigin>),
    Document { identifier: String, document: Value },
}

impl AppState {
    pub fn new(service: Arc<DiscoveryService>, settings: &ServerSettings, queue_capacity: usize) -> Self {
        Self {
            service,
            queue: Arc::new(Semaphore::new(queue_capacity.max(1))),
            token: settings.token.as_str().into(),
            public_reads: settings.public_reads,
        }
    }

    pub fn service(&self) -> &Arc<DiscoveryService> {
        &self.service
    }

    fn reserve(&self) -> Result<OwnedSemaphorePermit, QueueFull> {
        Arc::clone(&self.queue).try_acquire_owned().map_err(|_| QueueFull)
    }

    /// Queues a main-workflow run and returns its execution id.
    pub fn enqueue_scan(&self, sources: Vec<SourceOrigin>, trigger: Trigger) -> Result<String, ApiError> {
        self.enqueue(Work::Scan(sources), trigger, None)
    }

    fn enqueue(&self, work: Work, trigger: Trigger, identifier: Option<String>) -> Result<String, ApiError> {
        let permit = self.reserve().map_err(|_| ApiError::QueueFull)?;
        let record: ExecutionRecord = self.service.begin(trigger, identifier)?;
        let id = record.execution_id.clone();
        let service = Arc::clone(&self.service);
        tokio::task::spawn_blocking(move || {
            let _permit = permit;
            let result = match work {
                Work::Scan(sources) => service.run_scan(&record.execution_id, &sources),
                Work::Document { identifier, document } => {
                    service.run_document(&record.execution_id, &identifier, document)
                }
            };
            match result {
                Ok(out) => info!(execution = %out.execution_id, summary = %out.report.summary.headline, "execution finished"),
                Err(e) => warn!(execution = %record.execution_id, %e, "execution failed"),
            }
        });
        Ok(id)
    }

    fn authorize(&self, headers: &HeaderMap) -> Result<(), ApiError> {
        let presented = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .unwrap_or_default();
        if constant_time_eq(presented.as_bytes(), self.token.as_bytes()) {
            Ok(())
        } else {
            Err(ApiError::Unauthorized)
        }
    }

    fn authorize_read(&self, headers: &HeaderMap) -> Result<(), ApiError> {
        if self.public_reads {
            Ok(())
        } else {
            self.authorize(headers)
        }
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("missing or invalid bearer token")]
    Unauthorized,
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("execution queue is full, retry later")]
    QueueFull,
    #[error("{0}")]
    Internal(String),
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Registry(RegistryError::NotFound(_)) | ServiceError::Store(StoreError::NotFound(_)) => {
                ApiError::NotFound(e.to_string())
            }
            ServiceError::Registry(RegistryError::Deleted(_)) => ApiError::Conflict(e.to_string()),
            ServiceError::Registry(RegistryError::Invalid(_)) | ServiceError::Source(_) => {
                ApiError::BadRequest(e.to_string())
            }
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self {
            ApiError::Unauthorized => StatusCode::UNAUTHORIZED,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::QueueFull => StatusCode::TOO_MANY_REQUESTS,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut response = (status, Json(json!({"error": self.to_string()}))).into_response();
        match self {
            ApiError::QueueFull => {
                response.headers_mut().insert(header::RETRY_AFTER, HeaderValue::from(RETRY_AFTER_SECS));
            }
            ApiError::Unauthorized => {
                response
                    .headers_mut()
                    .insert(header::WWW_AUTHENTICATE, HeaderValue::from_static("Bearer"));
            }
            _ => {}
        }
        response
    }
}

/// Parses a JSON body. Error messages carry only the position, never the offending value.
fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8], expected: &str) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        ApiError::BadRequest(format!(
            "malformed body at line {} column {}: expected {expected}",
            e.line(),
            e.column()
        ))
    })
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/discovery", post(submit_document))
        .route("/v1/reports", get(list_reports))
        .route("/v1/reports/{id}", get(get_report))
        .route("/v1/registry", get(list_registry))
        .route("/v1/registry/repositories", post(register_repository))
        .route("/v1/registry/storages/{id}", patch(complete_storage).delete(delete_storage))
        .route("/v1/registry/storages/{id}/exclude", post(exclude_storage))
        .route("/v1/executions", post(trigger_execution))
        .with_state(state)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Submission {
    identifier: String,
    document: Value,
}

async fn submit_document(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    state.authorize(&headers)?;
    let submission: Submission = parse_body(&body, "{\"identifier\": string, \"document\": JSON}")?;
    if submission.identifier.trim().is_empty() {
        return Err(ApiError::BadRequest("identifier must not be empty".into()));
    }
    let identifier = submission.identifier.clone();
    let id = state.enqueue(
        Work::Document {
            identifier: submission.identifier,
            document: submission.document,
        },
        Trigger::Api,
        Some(identifier),
    )?;
    Ok(accepted(json!({"execution_id": id})))
}

fn accepted(body: Value) -> Response {
    (StatusCode::ACCEPTED, Json(body)).into_response()
}

async fn list_reports(State(state): State<AppState>, headers: HeaderMap) -> Result<Json<Value>, ApiError> {
    state.authorize_read(&headers)?;
    let service = Arc::clone(state.service());
    let list = tokio::task::spawn_blocking(move || -> Result<Vec<Value>, ServiceError> {
        let store = service.store();
        let mut out = Vec::new();
        for record in store.executions()? {
            let report = store.get_report(&record.execution_id)?;
            out.push(json!({
                "execution_id": report.execution_id,
                "trigger": report.trigger,
                "identifier": report.identifier,
                "state": report.state,
                "started": report.started,
                "finished": report.finished,
                "headline": report.summary.headline,
            }));
        }
        Ok(out)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(Json(json!({"reports": list})))
}

async fn get_report(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    state.authorize_read(&headers)?;
    let service = Arc::clone(state.service());
    let report = tokio::task::spawn_blocking(move || service.store().get_report(&id))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(ServiceError::from)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], report.to_json()).into_response())
}

async fn list_registry(State(state): State<AppState>, headers: HeaderMap) -> Result<Json<Value>, ApiError> {
    state.authorize_read(&headers)?;
    let registry = state.service().registry()?;
    Ok(Json(json!({
        "repositories": registry.repositories(),
        "storages": registry.entries().collect::<Vec<_>>(),
    })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RepositoryRequest {
    uri: String,
    branch: String,
}

async fn register_repository(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    state.authorize(&headers)?;
    let request: RepositoryRequest = parse_body(&body, "{\"uri\": string, \"branch\": string}")?;
    let origin = SourceOrigin::GitRemote {
        uri: request.uri,
        branch: request.branch,
    };
    let registered = state.service().register_repository(origin.clone())?;
    let id = state.enqueue_scan(vec![origin], Trigger::Api)?;
    Ok(accepted(json!({"registered": registered, "execution_id": id})))
}

async fn complete_storage(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    state.authorize(&headers)?;
    let overrides: Overrides = parse_body(
        &body,
        "overrides {host, port, database, username, password: {\"env\": NAME} | {\"file\": PATH}}",
    )?;
    let entry = state.service().complete_storage(&id, overrides)?;
    Ok(Json(json!(entry)))
}

async fn exclude_storage(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    state.authorize(&headers)?;
    let entry = state.service().exclude_storage(&id)?;
    Ok(Json(json!(entry)))
}

async fn delete_storage(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    state.authorize(&headers)?;
    state.service().delete_storage(&id)?;
    Ok(Json(json!({"deleted": id})))
}

async fn trigger_execution(State(state): State<AppState>, headers: HeaderMap) -> Result<Response, ApiError> {
    state.authorize(&headers)?;
    let sources = state.service().registered_sources()?;
    let id = state.enqueue_scan(sources, Trigger::Api)?;
    Ok(accepted(json!({"execution_id": id})))
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn full_queue_answers_429_with_retry_hint() {
        let dir = tempfile::tempdir().unwrap();
        let service = Arc::new(DiscoveryService::open(dir.path(), None).unwrap());
        let settings = ServerSettings {
            listen: "127.0.0.1:0".parse().unwrap(),
            token: "t".into(),
            public_reads: false,
        };
        let state = AppState::new(service, &settings, 1);
        let _held = state.reserve().unwrap();
        let err = state.enqueue_scan(Vec::new(), Trigger::Manual).unwrap_err();
        let response = err.into_response();
        assert_eq!(response.status(), StatusCode::TOO_MANY_REQUESTS);
        assert_eq!(response.headers()[header::RETRY_AFTER], RETRY_AFTER_SECS.to_string().as_str());
        // Nothing was recorded for the refused submission.
        assert!(state.service().store().executions().unwrap().is_empty());
    }

    #[test]
    fn token_comparison() {
        assert!(constant_time_eq(b"abc", b"abc"));
        assert!(!constant_time_eq(b"abc", b"abd"));
        assert!(!constant_time_eq(b"abc", b"abcd"));
    }

    #[test]
    fn malformed_bodies_do_not_echo_values() {
        let err = parse_body::<Submission>(br#"{"identifier": "secret-value-123", "document": }"#, "x").err().unwrap();
        assert!(!err.to_string().contains("secret-value-123"));
        let err = parse_body::<Submission>(br#"{"identifier": 42424242, "document": {}}"#, "x").err().unwrap();
        assert!(!err.to_string().contains("42424242"));
    }
}
