//! HTTP/JSON sessions over divergence-network derivations.
//!
//! A session holds a linear history of network versions. Every version after
//! the first was produced by a Φ-checked rule application; undo moves a cursor
//! back and the next apply truncates whatever lay past it.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use divnet_core::rewrite::list_matches_with_tol;
use divnet_core::{
    apply_with_tol, phi_breakdown, ConvexFunctionSpec, Derivation, DerivationStep,
    Error as CoreError, Network, Registry, RuleId, RuleMatch, ScriptStep, Tolerance,
};
use serde::Deserialize;
use serde_json::{json, Value};

/// An error response: status plus `{"error": {"code", "message"}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.to_string(),
            message: message.into(),
        }
    }

    fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let status = match e {
            CoreError::StaleMatch(_) => StatusCode::CONFLICT,
            CoreError::PhiViolation { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            CoreError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Version {
    network: Network,
    step: Option<DerivationStep>,
}

pub struct Session {
    id: String,
    spec: ConvexFunctionSpec,
    history: Vec<Version>,
    cursor: usize,
}

impl Session {
    fn current(&self) -> &Network {
        &self.history[self.cursor].network
    }

    /// The history up to the cursor as a replayable derivation.
    pub fn derivation(&self) -> Derivation {
        let steps = self.history[1..=self.cursor]
            .iter()
            .filter_map(|v| v.step.as_ref())
            .map(|s| ScriptStep {
                rule_match: s.rule_match.clone(),
                expected_phi: Some(s.phi_after),
            })
            .collect();
        Derivation {
            generator: self.spec.id().to_string(),
            initial: self.history[0].network.clone(),
            steps,
            final_network: Some(self.current().clone()),
        }
    }
}

/// Shared server state.
pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
    registry: Registry,
    tol: Tolerance,
    snapshot_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(registry: Registry, tol: Tolerance) -> Self {
        AppState {
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            registry,
            tol,
            snapshot_dir: None,
        }
    }

    /// Writes each session's derivation to `<dir>/<session>.json` after every
    /// change.
    pub fn with_snapshots(mut self, dir: impl Into<PathBuf>) -> Self {
        self.snapshot_dir = Some(dir.into());
        self
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| {
                ApiError::new(
                    StatusCode::NOT_FOUND,
                    "unknown_session",
                    format!("no session `{id}`"),
                )
            })
    }

    fn snapshot(&self, s: &Session) -> ApiResult<()> {
        if let Some(dir) = &self.snapshot_dir {
            std::fs::create_dir_all(dir).map_err(CoreError::from)?;
            std::fs::write(dir.join(format!("{}.json", s.id)), s.derivation().to_json())
                .map_err(CoreError::from)?;
        }
        Ok(())
    }
}

impl Default for AppState {
    fn default() -> Self {
        AppState::new(Registry::new(), Tolerance::from_env())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/matches", get(get_matches))
        .route("/sessions/{id}/apply", post(apply_match))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/export", get(export))
        .with_state(state)
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(addr: &str, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::bad_request("malformed_request", e.to_string()))
}

fn phi_view(net: &Network, spec: &ConvexFunctionSpec) -> ApiResult<(f64, Value)> {
    let b = phi_breakdown(net, spec)?;
    Ok((
        b.total,
        serde_json::to_value(&b).expect("breakdown serializes"),
    ))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    network: Value,
    #[serde(default)]
    generator: Option<String>,
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let req: CreateRequest = parse_body(&body)?;
    let mut doc = req.network;
    let obj = doc
        .as_object_mut()
        .ok_or_else(|| ApiError::bad_request("malformed_request", "`network` must be an object"))?;
    match (obj.get("generator").and_then(Value::as_str), &req.generator) {
        (Some(a), Some(b)) if a != b => {
            return Err(CoreError::GeneratorMismatch(a.to_string(), b.clone()).into());
        }
        (None, Some(g)) => {
            obj.insert("generator".into(), Value::String(g.clone()));
        }
        (None, None) => {
            return Err(ApiError::bad_request(
                "malformed_request",
                "no generator given",
            ))
        }
        _ => {}
    }
    let network: Network = serde_json::from_value(doc)
        .map_err(|e| ApiError::bad_request("invalid_network", e.to_string()))?;
    let spec = app
        .registry
        .get(network.generator(), network.dim().unwrap_or(1))?;
    let (phi, breakdown) = phi_view(&network, &spec)?;
    let id = format!("s{}", app.next_id.fetch_add(1, Ordering::Relaxed));
    let session = Session {
        id: id.clone(),
        spec,
        history: vec![Version {
            network,
            step: None,
        }],
        cursor: 0,
    };
    app.snapshot(&session)?;
    app.sessions
        .write()
        .expect("session map poisoned")
        .insert(id.clone(), Arc::new(Mutex::new(session)));
    Ok((
        StatusCode::CREATED,
        Json(json!({"session_id": id, "version": 0, "phi": phi, "breakdown": breakdown})),
    ))
}

async fn get_session(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let session = app.session(&id)?;
    let s = session.lock().expect("session poisoned");
    let (phi, breakdown) = phi_view(s.current(), &s.spec)?;
    let history: Vec<Value> = s
        .history
        .iter()
        .enumerate()
        .map(|(version, v)| match &v.step {
            None => json!({"version": version}),
            Some(step) => json!({
                "version": version,
                "rule": step.rule_match.rule,
                "direction": step.rule_match.direction,
                "phi_before": step.phi_before,
                "phi_after": step.phi_after,
                "residual": step.residual,
            }),
        })
        .collect();
    Ok(Json(json!({
        "session_id": s.id,
        "generator": s.spec.id(),
        "version": s.cursor,
        "network": s.current(),
        "phi": phi,
        "breakdown": breakdown,
        "history": history,
    })))
}

#[derive(Deserialize)]
struct MatchQuery {
    rule: Option<String>,
}

async fn get_matches(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<MatchQuery>,
) -> ApiResult<Json<Value>> {
    let rules = match q.rule.as_deref() {
        Some(r) => vec![r.parse::<RuleId>()?],
        None => RuleId::ALL.to_vec(),
    };
    let session = app.session(&id)?;
    let s = session.lock().expect("session poisoned");
    let matches: Vec<RuleMatch> = rules
        .into_iter()
        .flat_map(|r| list_matches_with_tol(s.current(), r, &s.spec, app.tol))
        .collect();
    Ok(Json(json!({"version": s.cursor, "matches": matches})))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ApplyRequest {
    #[serde(rename = "match")]
    rule_match: RuleMatch,
    /// Version the match was computed against; a mismatch is a conflict.
    #[serde(default)]
    version: Option<usize>,
}

async fn apply_match(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let session = app.session(&id)?;
    let req: ApplyRequest = parse_body(&body)?;
    let mut s = session.lock().expect("session poisoned");
    if let Some(v) = req.version.filter(|v| *v != s.cursor) {
        return Err(CoreError::StaleMatch(format!(
            "match was computed for version {v}, session is at {}",
            s.cursor
        ))
        .into());
    }
    let (network, step) = apply_with_tol(s.current(), &req.rule_match, &s.spec, true, app.tol)?;
    let cursor = s.cursor;
    s.history.truncate(cursor + 1);
    let out = json!({
        "new_version": cursor + 1,
        "phi_before": step.phi_before,
        "phi_after": step.phi_after,
        "residual": step.residual,
        "inverse": step.inverse,
    });
    s.history.push(Version {
        network,
        step: Some(step),
    });
    s.cursor += 1;
    app.snapshot(&s)?;
    Ok(Json(out))
}

async fn undo(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let session = app.session(&id)?;
    let mut s = session.lock().expect("session poisoned");
    if s.cursor == 0 {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "at_origin",
            "nothing to undo",
        ));
    }
    s.cursor -= 1;
    let (phi, _) = phi_view(s.current(), &s.spec)?;
    app.snapshot(&s)?;
    Ok(Json(json!({"version": s.cursor, "phi": phi})))
}

#[derive(Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

async fn export(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<ExportQuery>,
) -> ApiResult<Response> {
    let session = app.session(&id)?;
    let s = session.lock().expect("session poisoned");
    match q.format.as_deref().unwrap_or("json") {
        "json" => Ok((
            [(header::CONTENT_TYPE, "application/json")],
            s.current().to_json(),
        )
            .into_response()),
        "dot" => Ok((
            [(header::CONTENT_TYPE, "text/vnd.graphviz")],
            s.current().to_dot(),
        )
            .into_response()),
        other => Err(ApiError::bad_request(
            "unknown_format",
            format!("unknown export format `{other}` (json, dot)"),
        )),
    }
}
