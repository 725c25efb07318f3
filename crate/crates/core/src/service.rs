//! Oversight HTTP API: read access to graphs, evidence, audits and the
//! review queue, plus the human actions reviewers take on escalations.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{FromRequestParts, Path as UrlPath, Query, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::ledger::audit::AuditError;
use crate::ledger::{AgentKind, ProvAgent};
use crate::model::NodeKind;
use crate::pipeline::{GraphView, PipelineError, Workspace};

pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Reviewer,
    Auditor,
}

/// One bearer token and the human it authenticates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenGrant {
    pub token: String,
    pub role: Role,
    pub agent_id: String,
    #[serde(default)]
    pub display_name: String,
}

#[derive(Debug, Error)]
pub enum TokenError {
    #[error("cannot read token file {0}: {1}")]
    Io(String, String),
    #[error("malformed token file: {0}")]
    Malformed(String),
    #[error("token for `{0}` is empty")]
    EmptyToken(String),
}

#[derive(Debug, Clone, Default)]
pub struct TokenTable {
    grants: BTreeMap<String, TokenGrant>,
}

impl TokenTable {
    pub fn new(grants: impl IntoIterator<Item = TokenGrant>) -> Result<Self, TokenError> {
        let mut table = BTreeMap::new();
        for g in grants {
            if g.token.trim().is_empty() {
                return Err(TokenError::EmptyToken(g.agent_id));
            }
            table.insert(g.token.clone(), g);
        }
        Ok(Self { grants: table })
    }

    /// Reads a JSON array of [`TokenGrant`].
    pub fn load(path: &Path) -> Result<Self, TokenError> {
        let bytes = std::fs::read(path).map_err(|e| TokenError::Io(path.display().to_string(), e.to_string()))?;
        let grants: Vec<TokenGrant> = serde_json::from_slice(&bytes).map_err(|e| TokenError::Malformed(e.to_string()))?;
        Self::new(grants)
    }

    pub fn grants(&self) -> impl Iterator<Item = &TokenGrant> {
        self.grants.values()
    }

    fn lookup(&self, token: &str) -> Option<&TokenGrant> {
        self.grants.get(token)
    }
}

#[derive(Clone)]
pub struct AppState {
    ws: Arc<Mutex<Workspace>>,
    tokens: Arc<TokenTable>,
}

impl AppState {
    /// Registers every token's agent as a human agent in the ledger.
    pub fn new(mut ws: Workspace, tokens: TokenTable) -> Result<Self, PipelineError> {
        for g in tokens.grants() {
            let name = if g.display_name.is_empty() { g.agent_id.clone() } else { g.display_name.clone() };
            if ws.agent(&g.agent_id).is_none() {
                ws.register_agent(ProvAgent { id: g.agent_id.clone(), kind: AgentKind::Human, display_name: name })?;
            }
        }
        Ok(Self { ws: Arc::new(Mutex::new(ws)), tokens: Arc::new(tokens) })
    }

    pub fn workspace(&self) -> MutexGuard<'_, Workspace> {
        self.ws.lock().unwrap_or_else(|p| p.into_inner())
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, code: code.to_owned(), message: message.into() }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", format!("{what} `{id}` not found"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.code, "message": self.message}))).into_response()
    }
}

/// HTTP status for a pipeline error.
pub fn status_for(e: &PipelineError) -> StatusCode {
    match e {
        PipelineError::UnknownGraph(_)
        | PipelineError::UnknownNode(_)
        | PipelineError::UnknownAssumption(_)
        | PipelineError::UnknownCase(_) => StatusCode::NOT_FOUND,
        PipelineError::Audit(a) => match a {
            AuditError::UnknownClaim(_) | AuditError::UnknownNode(_) | AuditError::UnknownGraph(_) => {
                StatusCode::NOT_FOUND
            }
            AuditError::NotAiGenerated(_) => StatusCode::BAD_REQUEST,
            AuditError::Inconsistent(_) => StatusCode::INTERNAL_SERVER_ERROR,
        },
        PipelineError::AlreadyApproved(_) => StatusCode::CONFLICT,
        PipelineError::GatingViolation(_) => StatusCode::UNPROCESSABLE_ENTITY,
        PipelineError::MissingField(_) | PipelineError::Parse(_) | PipelineError::Case(_) => StatusCode::BAD_REQUEST,
        PipelineError::UnknownAgent(_) | PipelineError::NotHumanAgent(_) => StatusCode::FORBIDDEN,
        PipelineError::Busy(_) => StatusCode::SERVICE_UNAVAILABLE,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        ApiError::new(status_for(&e), e.code(), e.to_string())
    }
}

/// Authenticated caller.
pub struct Caller(pub TokenGrant);

impl FromRequestParts<AppState> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let unauthorized = || ApiError::new(StatusCode::UNAUTHORIZED, "Unauthorized", "missing or unknown bearer token");
        let value = parts.headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok()).ok_or_else(unauthorized)?;
        let token = value.strip_prefix("Bearer ").ok_or_else(unauthorized)?.trim();
        state.tokens.lookup(token).cloned().map(Caller).ok_or_else(unauthorized)
    }
}

/// Caller holding the reviewer role.
pub struct Reviewer(pub TokenGrant);

impl FromRequestParts<AppState> for Reviewer {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let Caller(grant) = Caller::from_request_parts(parts, state).await?;
        if grant.role != Role::Reviewer {
            return Err(ApiError::new(StatusCode::FORBIDDEN, "Forbidden", "this action requires the reviewer role"));
        }
        Ok(Reviewer(grant))
    }
}

type ApiResult = Result<Response, ApiError>;

fn ok_json<T: Serialize>(v: T) -> ApiResult {
    Ok(Json(v).into_response())
}

async fn blocking<T: Send + 'static>(
    state: &AppState,
    f: impl FnOnce(&mut Workspace) -> Result<T, PipelineError> + Send + 'static,
) -> Result<T, ApiError> {
    let ws = state.ws.clone();
    tokio::task::spawn_blocking(move || {
        let mut guard = ws.lock().unwrap_or_else(|p| p.into_inner());
        f(&mut guard)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?
    .map_err(ApiError::from)
}

/// Who the bearer token authenticates, so a client can hide reviewer-only actions.
async fn session(Caller(who): Caller) -> ApiResult {
    ok_json(json!({"agent_id": who.agent_id, "role": who.role, "display_name": who.display_name}))
}

async fn list_graphs(_: Caller, State(s): State<AppState>) -> ApiResult {
    ok_json(s.workspace().graphs())
}

fn rendered(s: &AppState, id: &str, view: GraphView, mime: &'static str) -> ApiResult {
    let bytes = s.workspace().render(id, view).ok_or_else(|| ApiError::not_found("graph", id))?;
    let mut resp = bytes.into_response();
    resp.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static(mime));
    Ok(resp)
}

async fn get_graph(_: Caller, State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    rendered(&s, &id, GraphView::Bundle, "application/json")
}

async fn get_violations(_: Caller, State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    rendered(&s, &id, GraphView::Report, "application/json")
}

async fn get_document(_: Caller, State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    rendered(&s, &id, GraphView::Document, "application/json")
}

#[derive(Deserialize)]
struct GsnQuery {
    format: Option<String>,
}

async fn get_gsn(_: Caller, State(s): State<AppState>, UrlPath(id): UrlPath<String>, Query(q): Query<GsnQuery>) -> ApiResult {
    match q.format.as_deref().unwrap_or("json") {
        "json" => rendered(&s, &id, GraphView::GsnJson, "application/json"),
        "dot" => rendered(&s, &id, GraphView::GsnDot, "text/vnd.graphviz"),
        other => Err(ApiError::new(StatusCode::BAD_REQUEST, "BadFormat", format!("unknown gsn format `{other}`"))),
    }
}

async fn get_evidence(_: Caller, State(s): State<AppState>, UrlPath(hash): UrlPath<String>) -> ApiResult {
    let item = s.workspace().evidence(&hash)?;
    ok_json(item.ok_or_else(|| ApiError::not_found("evidence", &hash))?)
}

#[derive(Deserialize)]
struct GraphQuery {
    graph: Option<String>,
}

fn node_ref(id: String, q: GraphQuery) -> String {
    match q.graph {
        Some(g) if !id.contains('@') => format!("{id}@{g}"),
        _ => id,
    }
}

async fn audit_evidence(_: Caller, State(s): State<AppState>, UrlPath(id): UrlPath<String>, Query(q): Query<GraphQuery>) -> ApiResult {
    ok_json(s.workspace().audit_evidence_for_claim(&node_ref(id, q))?)
}

async fn audit_generation(_: Caller, State(s): State<AppState>, UrlPath(id): UrlPath<String>, Query(q): Query<GraphQuery>) -> ApiResult {
    ok_json(s.workspace().audit_generation_context(&node_ref(id, q))?)
}

async fn audit_approvals(_: Caller, State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    ok_json(s.workspace().audit_approvals(&id)?)
}

async fn get_queue(_: Caller, State(s): State<AppState>) -> ApiResult {
    ok_json(s.workspace().queue())
}

#[derive(Deserialize, Default)]
struct ApproveBody {
    graph_id: Option<String>,
}

async fn approve(
    Reviewer(who): Reviewer,
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Option<Json<ApproveBody>>,
) -> ApiResult {
    let graph_id = body.and_then(|Json(b)| b.graph_id);
    let out = blocking(&s, move |ws| {
        let graph_id = match graph_id {
            Some(g) => g,
            None => ws
                .queue()
                .into_iter()
                .find(|q| {
                    ws.graph(&q.graph_id)
                        .is_some_and(|g| g.nodes_of(NodeKind::Assumption).any(|n| n.id.as_str() == id))
                })
                .map(|q| q.graph_id)
                .ok_or_else(|| PipelineError::UnknownAssumption(id.clone()))?,
        };
        ws.approve_assumption(&graph_id, &id, &who.agent_id)
    })
    .await?;
    ok_json(out.to_json())
}

#[derive(Deserialize)]
struct AnnotateBody {
    text: Option<String>,
    graph_id: Option<String>,
}

async fn annotate(
    Reviewer(who): Reviewer,
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(b): Json<AnnotateBody>,
) -> ApiResult {
    let r = node_ref(id, GraphQuery { graph: b.graph_id });
    let text = b.text.ok_or(PipelineError::MissingField("text"))?;
    let activity = blocking(&s, move |ws| ws.annotate(&r, &text, &who.agent_id)).await?;
    ok_json(json!({"activity_id": activity}))
}

#[derive(Deserialize)]
struct OverrideBody {
    disposition: Option<String>,
    rationale: Option<String>,
}

async fn override_graph(
    Reviewer(who): Reviewer,
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(b): Json<OverrideBody>,
) -> ApiResult {
    let disposition = b.disposition.ok_or(PipelineError::MissingField("disposition"))?;
    let rationale = b.rationale.unwrap_or_default();
    let rec = blocking(&s, move |ws| ws.override_decision(&id, &disposition, &rationale, &who.agent_id)).await?;
    ok_json(rec)
}

async fn rerun(Reviewer(_): Reviewer, State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let out = blocking(&s, move |ws| ws.rerun_case(&id)).await?;
    ok_json(out.to_json())
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint")
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/session", get(session))
        .route("/api/graphs", get(list_graphs))
        .route("/api/graphs/{id}", get(get_graph))
        .route("/api/graphs/{id}/violations", get(get_violations))
        .route("/api/graphs/{id}/document", get(get_document))
        .route("/api/graphs/{id}/gsn", get(get_gsn))
        .route("/api/graphs/{id}/override", post(override_graph))
        .route("/api/evidence/{hash}", get(get_evidence))
        .route("/api/audit/evidence-for-claim/{id}", get(audit_evidence))
        .route("/api/audit/generation-context/{id}", get(audit_generation))
        .route("/api/audit/approvals/{graph_id}", get(audit_approvals))
        .route("/api/queue", get(get_queue))
        .route("/api/assumptions/{id}/approve", post(approve))
        .route("/api/nodes/{id}/annotate", post(annotate))
        .route("/api/cases/{id}/rerun", post(rerun))
        .fallback(fallback)
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(state: AppState, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
