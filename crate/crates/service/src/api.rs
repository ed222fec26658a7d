//! JSON API over audit sessions stored in a data directory.
//!
//! | Method | Path                    | Body                                   |
//! |--------|-------------------------|----------------------------------------|
//! | GET    | `/audits`               |                                        |
//! | POST   | `/audits`               | [`CreateAudit`]                        |
//! | GET    | `/audits/{id}`          |                                        |
//! | POST   | `/audits/{id}/draw`     | [`DrawRequest`]                        |
//! | POST   | `/audits/{id}/mvr`      | [`MvrRequest`]                         |
//! | POST   | `/audits/{id}/escalate` |                                        |
//! | GET    | `/audits/{id}/trees`    | `?format=text` (default), `dot`, `json` |
//! | GET    | `/audits/{id}/report`   |                                        |
//!
//! Errors are `{"schema", "error": {"kind", "message", "unpruned"?}}` with
//! 404 for unknown audits or undrawn ballots, 409 for duplicate entries and
//! state conflicts, and 422 for inputs the audit refuses.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use irv_rla::audit::engine::EntryStatus;
use irv_rla::audit::risk::{parse_ratio, KaplanMarkov};
use irv_rla::audit::{AuditMode, AuditSnapshot, AuditSpec, Draw, MvrRecord, Session};
use irv_rla::cvr::parse_canonical;
use irv_rla::tree::TreeDocument;
use irv_rla::Error;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::{report, SCHEMA};

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub message: String,
    pub unpruned: Option<Vec<Vec<u32>>>,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            message: message.into(),
            unpruned: None,
        }
    }

    fn unknown_audit(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_audit", format!("no audit {id}"))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        let (status, kind) = match &e {
            Error::Parse { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "parse"),
            Error::Validation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation"),
            Error::Domain(_) => (StatusCode::CONFLICT, "state"),
            Error::Tie { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "tie"),
            Error::WinnerMismatch { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "winner_mismatch"),
            Error::Uncertifiable { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "uncertifiable"),
            Error::NotCertified { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "not_certified"),
            Error::NodeBudgetExceeded(_) => (StatusCode::UNPROCESSABLE_ENTITY, "node_budget"),
            Error::RosterTooLarge { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "roster_too_large"),
            Error::NotDrawn(_) => (StatusCode::NOT_FOUND, "not_drawn"),
            Error::DuplicateEntry(_) => (StatusCode::CONFLICT, "duplicate_entry"),
            Error::Io { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "io"),
            Error::Log(_) => (StatusCode::INTERNAL_SERVER_ERROR, "log"),
        };
        let unpruned = match e {
            Error::NotCertified { unpruned } => Some(
                unpruned
                    .into_iter()
                    .map(|order| order.into_iter().map(|c| c.0).collect())
                    .collect(),
            ),
            _ => None,
        };
        ApiError {
            status,
            kind,
            message,
            unpruned,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({ "kind": self.kind, "message": self.message });
        if let Some(u) = self.unpruned {
            error["unpruned"] = json!(u);
        }
        (self.status, Json(json!({ "schema": SCHEMA, "error": error }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Upload limit, large enough for county-scale CVR files.
pub const MAX_BODY_BYTES: usize = 256 << 20;

/// Shared state: the data directory and the sessions opened so far.
#[derive(Clone)]
pub struct AppState {
    data_dir: Arc<PathBuf>,
    sessions: Arc<Mutex<HashMap<String, Session>>>,
}

impl AppState {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        AppState {
            data_dir: Arc::new(data_dir.into()),
            sessions: Arc::default(),
        }
    }

    /// Runs `f` on the session `id`, opening it from disk on first use.
    fn with_session<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> ApiResult<T>) -> ApiResult<T> {
        if id.len() != 16 || !id.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(ApiError::unknown_audit(id));
        }
        let mut sessions = self.sessions.lock().expect("session lock poisoned");
        if !sessions.contains_key(id) {
            let dir = self.data_dir.join(id);
            if !dir.join(irv_rla::audit::session::LOG_FILE).is_file() {
                return Err(ApiError::unknown_audit(id));
            }
            sessions.insert(id.to_string(), Session::open(&dir)?);
        }
        f(sessions.get_mut(id).expect("inserted above"))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/audits", get(list_audits).post(create_audit))
        .route("/audits/{id}", get(get_audit))
        .route("/audits/{id}/draw", post(draw))
        .route("/audits/{id}/mvr", post(enter_mvr))
        .route("/audits/{id}/escalate", post(escalate))
        .route("/audits/{id}/trees", get(trees))
        .route("/audits/{id}/report", get(report_page))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

/// Full view of one audit.
#[derive(Serialize)]
pub struct AuditView {
    pub schema: &'static str,
    pub id: String,
    pub seed: String,
    pub log_head: String,
    pub snapshot: AuditSnapshot,
    pub trees: TreeDocument,
    /// Cards scored at their worst case because they are phantoms or missing.
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub drawn: Vec<Draw>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub second_entry_matches: Option<Vec<bool>>,
}

fn view(session: &Session) -> ApiResult<AuditView> {
    let audit = session.audit();
    let snapshot = audit.snapshot()?;
    let warnings = snapshot
        .ballots
        .iter()
        .filter_map(|b| match b.status {
            EntryStatus::NotFound => Some(format!(
                "ballot {} was not found and is scored as its worst case",
                b.ballot_id
            )),
            EntryStatus::Phantom => Some(format!("{} has no CVR and is scored as its worst case", b.ballot_id)),
            _ => None,
        })
        .collect();
    Ok(AuditView {
        schema: SCHEMA,
        id: session.id().to_string(),
        seed: audit.spec().seed.clone(),
        log_head: session.log_head().to_string(),
        trees: audit.trees()?,
        snapshot,
        warnings,
        drawn: Vec::new(),
        second_entry_matches: None,
    })
}

async fn list_audits(State(state): State<AppState>) -> ApiResult<Json<serde_json::Value>> {
    let ids = Session::list(&state.data_dir)?;
    Ok(Json(json!({ "schema": SCHEMA, "audits": ids })))
}

#[derive(Debug, Deserialize, Serialize)]
pub struct CreateAudit {
    /// Canonical CVR file contents.
    pub cvr: String,
    /// Assertion file contents.
    pub assertions: String,
    pub risk_limit: f64,
    #[serde(default)]
    pub mode: AuditMode,
    pub seed: String,
    #[serde(default)]
    pub error_rate: f64,
    /// Risk-function padding as `n/d` or a decimal; zero if absent.
    pub padding: Option<String>,
    /// Cards in the population; defaults to the CVR file's card bound.
    pub population: Option<u64>,
    /// Draws taken at start; defaults to the planning estimate.
    pub initial_draws: Option<u64>,
}

async fn create_audit(State(state): State<AppState>, Json(req): Json<CreateAudit>) -> ApiResult<impl IntoResponse> {
    if req.seed.trim().is_empty() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "validation",
            "seed must not be empty",
        ));
    }
    let (contest, _) = parse_canonical(&req.cvr)?;
    let mut spec = AuditSpec::new(
        req.risk_limit,
        req.mode,
        req.seed.clone(),
        req.population.unwrap_or(contest.card_upper_bound),
    );
    spec.error_rate = req.error_rate;
    if let Some(p) = &req.padding {
        spec.risk = KaplanMarkov::with_padding(parse_ratio(p)?)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", e.to_string()))?;
    }
    spec.planning()?;
    let session = Session::create(&state.data_dir, spec, &req.cvr, &req.assertions, req.initial_draws)?;
    let id = session.id().to_string();
    log::info!("audit {id} ready for contest {}", contest.contest_id);
    let mut sessions = state.sessions.lock().expect("session lock poisoned");
    let session = sessions.entry(id).or_insert(session);
    Ok((StatusCode::CREATED, Json(view(session)?)))
}

async fn get_audit(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<AuditView>> {
    state.with_session(&id, |s| view(s).map(Json))
}

#[derive(Debug, Default, Deserialize, Serialize)]
pub struct DrawRequest {
    /// Draws to add; defaults to the suggested next round.
    pub count: Option<u64>,
}

async fn draw(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Option<Json<DrawRequest>>,
) -> ApiResult<Json<AuditView>> {
    let count = body.and_then(|Json(b)| b.count);
    state.with_session(&id, |s| {
        let count = match count {
            Some(c) => c,
            None => s.audit().next_round()?.draws().ok_or_else(|| {
                ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "not_attainable",
                    "no attainable sample size; give an explicit count",
                )
            })?,
        };
        let drawn = s.draw(count)?;
        let mut v = view(s)?;
        v.drawn = drawn;
        Ok(Json(v))
    })
}

#[derive(Debug, Deserialize, Serialize)]
pub struct MvrRequest {
    pub records: Vec<MvrRecord>,
    /// Record an independent second reading instead of a first entry.
    #[serde(default)]
    pub second_entry: bool,
}

async fn enter_mvr(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<MvrRequest>,
) -> ApiResult<Json<AuditView>> {
    state.with_session(&id, |s| {
        if req.second_entry {
            let matches = req
                .records
                .into_iter()
                .map(|r| s.second_entry(r))
                .collect::<Result<Vec<_>, _>>()?;
            let mut v = view(s)?;
            v.second_entry_matches = Some(matches);
            return Ok(Json(v));
        }
        s.enter(req.records)?;
        view(s).map(Json)
    })
}

async fn escalate(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<AuditView>> {
    state.with_session(&id, |s| {
        s.escalate()?;
        view(s).map(Json)
    })
}

#[derive(Debug, Deserialize)]
pub struct TreeQuery {
    pub format: Option<String>,
}

async fn trees(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<TreeQuery>,
) -> ApiResult<Response> {
    state.with_session(&id, |s| {
        let doc = s.audit().trees()?;
        Ok(match q.format.as_deref().unwrap_or("text") {
            "text" => ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], doc.to_text()).into_response(),
            "dot" => (
                [(header::CONTENT_TYPE, "text/vnd.graphviz; charset=utf-8")],
                doc.to_dot(),
            )
                .into_response(),
            "json" => Json(json!({ "schema": SCHEMA, "trees": doc })).into_response(),
            other => {
                return Err(ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "validation",
                    format!("unknown tree format {other:?}"),
                ))
            }
        })
    })
}

async fn report_page(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    state.with_session(&id, |s| {
        let html = report::render(s.id(), s.log_head(), s.audit())?;
        Ok(([(header::CONTENT_TYPE, "text/html; charset=utf-8")], html).into_response())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use irv_rla::CandidateId;

    #[test]
    fn errors_map_to_statuses() {
        let e = ApiError::from(Error::NotDrawn("b1".into()));
        assert_eq!((e.status, e.kind), (StatusCode::NOT_FOUND, "not_drawn"));
        let e = ApiError::from(Error::DuplicateEntry("b1".into()));
        assert_eq!((e.status, e.kind), (StatusCode::CONFLICT, "duplicate_entry"));
        let e = ApiError::from(Error::NotCertified {
            unpruned: vec![vec![CandidateId(2), CandidateId(1)]],
        });
        assert_eq!(e.status, StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(e.unpruned, Some(vec![vec![2, 1]]));
    }

    #[test]
    fn rejects_ids_that_are_not_session_ids() {
        let state = AppState::new("/nonexistent");
        for id in ["", "../../etc/passwd", "0123456789abcdeg", "0123456789abcdef0"] {
            let err = state.with_session(id, |_| Ok(())).unwrap_err();
            assert_eq!(err.kind, "unknown_audit");
        }
    }
}
