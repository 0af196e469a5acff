//! HTTP API over a directory of agentlens projects.
//!
//! Every handler runs the project operation on the blocking pool under a
//! deadline. Bodies are compact JSON; errors are `{"error": {"code",
//! "message"}}` with the status taken from the error class.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use agentlens_core::causetrace::{ImplicitOptions, Scope, DEFAULT_DELTA, DEFAULT_MAX_EDGES};
use agentlens_core::error::{Classify, ErrorClass};
use agentlens_core::model::{AgentId, OperationRef, TimePoint};
use agentlens_core::project::{OutlineRequest, Project, ProjectError, ProjectStore};
use agentlens_core::search::{SearchMode, SearchOptions, DEFAULT_SEMANTIC_THRESHOLD};
use agentlens_core::segment::DEFAULT_TARGET_SEGMENTS;
use axum::extract::{DefaultBodyLimit, FromRequest, FromRequestParts, Multipart, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

pub const DEFAULT_PORT: u16 = 8321;
pub const DEFAULT_DEADLINE: Duration = Duration::from_secs(30);
const MAX_UPLOAD: usize = 256 * 1024 * 1024;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<ProjectStore>,
    /// Longest a request may spend on project work.
    pub deadline: Duration,
}

impl AppState {
    pub fn new(store: ProjectStore) -> Self {
        Self {
            store: Arc::new(store),
            deadline: DEFAULT_DEADLINE,
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/projects", post(create_project))
        .route("/projects/{id}/outline", get(outline))
        .route("/projects/{id}/agents", get(agents))
        .route("/projects/{id}/agents/{aid}/timeline", get(agent_timeline))
        .route("/projects/{id}/agents/{aid}/pca", get(pca))
        .route("/projects/{id}/operations/{t}/{aid}/{idx}", get(operation))
        .route("/projects/{id}/operations/{t}/{aid}/{idx}/causes", get(causes))
        .route("/projects/{id}/search", get(search))
        .route("/projects/{id}/monitor", get(monitor))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .with_state(state)
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    code: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    details: Option<serde_json::Value>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code,
                message: message.into(),
                details: None,
            },
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "validation", message)
    }
}

fn class_code(class: ErrorClass) -> &'static str {
    match class {
        ErrorClass::Validation => "validation",
        ErrorClass::NotFound => "not_found",
        ErrorClass::Conflict => "conflict",
        ErrorClass::Provider => "provider",
        ErrorClass::Internal => "internal",
    }
}

impl From<ProjectError> for ApiError {
    fn from(e: ProjectError) -> Self {
        let class = e.class();
        let status = StatusCode::from_u16(class.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let details = match &e {
            ProjectError::Invalid(report) => serde_json::to_value(report).ok(),
            _ => None,
        };
        if class == ErrorClass::Internal {
            tracing::error!(error = %e, "request failed");
        }
        Self {
            status,
            body: ErrorBody {
                code: class_code(class),
                message: e.to_string(),
                details,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.body }))).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

/// `Query` whose rejection is a JSON validation error.
struct Q<T>(T);

impl<T: serde::de::DeserializeOwned, S: Send + Sync> FromRequestParts<S> for Q<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        Query::<T>::from_request_parts(parts, state)
            .await
            .map(|Query(v)| Q(v))
            .map_err(|e| ApiError::bad_request(e.body_text()))
    }
}

/// `Path` whose rejection is a JSON validation error.
struct P<T>(T);

impl<T: serde::de::DeserializeOwned + Send, S: Send + Sync> FromRequestParts<S> for P<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        Path::<T>::from_request_parts(parts, state)
            .await
            .map(|Path(v)| P(v))
            .map_err(|e| ApiError::bad_request(e.body_text()))
    }
}

fn json_response<T: Serialize>(value: &T) -> Response {
    let body = serde_json::to_vec(value).expect("response serializes");
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

/// Runs `f` on the blocking pool, giving up after the deadline.
async fn run<T, F>(state: &AppState, f: F) -> ApiResult
where
    T: Serialize + Send + 'static,
    F: FnOnce() -> Result<T, ProjectError> + Send + 'static,
{
    let task = tokio::task::spawn_blocking(move || f().map(|v| json_response(&v)));
    match tokio::time::timeout(state.deadline, task).await {
        Ok(Ok(result)) => result.map_err(ApiError::from),
        Ok(Err(join)) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", join.to_string())),
        Err(_) => Err(ApiError::new(
            StatusCode::GATEWAY_TIMEOUT,
            "deadline",
            format!(
                "request exceeded the {}s deadline; precompute with `agentlens summarize` and retry",
                state.deadline.as_secs()
            ),
        )),
    }
}

async fn project(state: &AppState, id: String) -> Result<Arc<Project>, ApiError> {
    let store = state.store.clone();
    tokio::task::spawn_blocking(move || store.get(&id))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct CreateBody {
    log_path: PathBuf,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct Created {
    project_id: String,
    warnings: Vec<agentlens_core::ingest::Diagnostic>,
}

/// `POST /projects` with `{"logPath": ...}` or a multipart body whose
/// first file field holds the log.
async fn create_project(State(state): State<AppState>, req: Request) -> ApiResult {
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let bytes = if is_multipart {
        let mut form = Multipart::from_request(req, &state)
            .await
            .map_err(|e| ApiError::bad_request(e.to_string()))?;
        let field = form
            .next_field()
            .await
            .map_err(|e| ApiError::bad_request(e.to_string()))?
            .ok_or_else(|| ApiError::bad_request("multipart body has no fields"))?;
        field.bytes().await.map_err(|e| ApiError::bad_request(e.to_string()))?.to_vec()
    } else {
        let Json(body) = Json::<CreateBody>::from_request(req, &state)
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?;
        std::fs::read(&body.log_path)
            .map_err(|e| ApiError::bad_request(format!("cannot read {}: {e}", body.log_path.display())))?
    };
    let store = state.store.clone();
    run(&state, move || {
        let (info, report) = store.create(&bytes)?;
        Ok(Created {
            project_id: info.id,
            warnings: report.warnings,
        })
    })
    .await
}

#[derive(Debug, Default, Deserialize)]
struct RangeQuery {
    from: Option<u64>,
    to: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
struct OutlineQuery {
    from: Option<u64>,
    to: Option<u64>,
    /// Comma-separated agent ids; all agents when absent.
    agents: Option<String>,
    n: Option<usize>,
    q: Option<String>,
}

async fn outline(State(state): State<AppState>, P(id): P<String>, Q(q): Q<OutlineQuery>) -> ApiResult {
    let p = project(&state, id).await?;
    run(&state, move || {
        let range = p.range(q.from, q.to)?;
        let agents = q
            .agents
            .as_deref()
            .map(|s| s.split(',').map(str::trim).filter(|s| !s.is_empty()).map(AgentId::from).collect())
            .unwrap_or_default();
        let n = q.n.unwrap_or(DEFAULT_TARGET_SEGMENTS);
        if n == 0 {
            return Err(ProjectError::BadRequest("n must be positive".into()));
        }
        p.outline(&OutlineRequest {
            range,
            agents,
            target_segments: n,
            query: q.q.filter(|s| !s.trim().is_empty()),
        })
    })
    .await
}

async fn agents(State(state): State<AppState>, P(id): P<String>) -> ApiResult {
    let p = project(&state, id).await?;
    run(&state, move || Ok(p.agents())).await
}

async fn agent_timeline(
    State(state): State<AppState>,
    P((id, aid)): P<(String, String)>,
    Q(q): Q<RangeQuery>,
) -> ApiResult {
    let p = project(&state, id).await?;
    run(&state, move || {
        let range = p.range(q.from, q.to)?;
        p.agent_timeline(&aid, range)
    })
    .await
}

async fn pca(State(state): State<AppState>, P((id, aid)): P<(String, String)>, Q(q): Q<RangeQuery>) -> ApiResult {
    let p = project(&state, id).await?;
    run(&state, move || {
        let range = p.range(q.from, q.to)?;
        p.pca(&aid, range)
    })
    .await
}

async fn operation(State(state): State<AppState>, P((id, t, aid, idx)): P<(String, u64, String, u32)>) -> ApiResult {
    let p = project(&state, id).await?;
    run(&state, move || p.operation(&OperationRef::new(t, aid, idx)).cloned()).await
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
struct CausesQuery {
    delta: Option<f64>,
    scope: Option<String>,
    /// Zero disables the cap.
    max_edges: Option<usize>,
}

async fn causes(
    State(state): State<AppState>,
    P((id, t, aid, idx)): P<(String, u64, String, u32)>,
    Q(q): Q<CausesQuery>,
) -> ApiResult {
    let scope = match q.scope.as_deref() {
        Some(s) => s.parse::<Scope>().map_err(ApiError::bad_request)?,
        None => Scope::default(),
    };
    let opts = ImplicitOptions {
        delta: q.delta.unwrap_or(DEFAULT_DELTA),
        scope,
        max_edges: match q.max_edges {
            Some(0) => None,
            Some(n) => Some(n),
            None => Some(DEFAULT_MAX_EDGES),
        },
    };
    let p = project(&state, id).await?;
    run(&state, move || p.causes(&OperationRef::new(t, aid, idx), &opts)).await
}

#[derive(Debug, Default, Deserialize)]
struct SearchQuery {
    q: Option<String>,
    mode: Option<String>,
    threshold: Option<f64>,
    all: Option<bool>,
}

async fn search(State(state): State<AppState>, P(id): P<String>, Q(q): Q<SearchQuery>) -> ApiResult {
    let mode = match q.mode.as_deref() {
        Some(m) => m.parse::<SearchMode>().map_err(ApiError::bad_request)?,
        None => SearchMode::default(),
    };
    let opts = SearchOptions {
        mode,
        threshold: q.threshold.unwrap_or(DEFAULT_SEMANTIC_THRESHOLD),
        all_operations: q.all.unwrap_or(false),
    };
    let query = q.q.unwrap_or_default();
    let p = project(&state, id).await?;
    run(&state, move || p.search(&query, &opts)).await
}

#[derive(Debug, Default, Deserialize)]
struct MonitorQuery {
    t: Option<u64>,
    focus: Option<String>,
}

async fn monitor(State(state): State<AppState>, P(id): P<String>, Q(q): Q<MonitorQuery>) -> ApiResult {
    let t = q.t.ok_or_else(|| ApiError::bad_request("missing query parameter `t`"))?;
    let p = project(&state, id).await?;
    run(&state, move || p.monitor(TimePoint(t), q.focus.as_deref())).await
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(state: AppState, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
