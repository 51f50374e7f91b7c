//! HTTP routes.
//!
//! Mutating routes need basic auth (`401` otherwise). Request bodies are JSON;
//! malformed input is `400`, an id reused with a different body is `409`,
//! unknown learners and sessions are `404`. Errors have the shape
//! `{"error": <code>, "message": <text>}`.
//!
//! Learner keys and session ids in paths must be percent-encoded; account
//! keys contain slashes.

use std::collections::BTreeMap;
use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, NaiveDate, Utc};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use vita_core::adaptive::{EngineError, Principal};
use vita_core::analytics::{
    activity_by_learner, detect_outliers, learner_detail, weekly_summary, Conjunction, OutlierMethod, OutlierSpec,
    Term, TimeWindow,
};
use vita_core::export::{write_csv, EXPORT_FILE_NAME};
use vita_core::tutor::TutorError;
use vita_core::xapi::{parse_timestamp, serialize_statement, statement_from_value, GranularityTier, Statement};

use crate::engine::{AdvanceRequest, OverrideRequest, ScoreRequest, ServiceError};
use crate::llm::MOCK_BANNER;
use crate::service::AppState;
use crate::store::{Cursor, QueryError, QueryFilter, StoreOutcome, DEFAULT_LIMIT};
use crate::tiers::{ForwardError, ForwardOutcome};
use crate::tutor::{CreateSession, RenderRequest, SessionError, SocraticRequest, TurnRequest};

/// Largest page a single GET returns.
pub const MAX_PAGE: usize = 1000;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut resp = (self.status, Json(json!({"error": self.code, "message": self.message}))).into_response();
        if self.status == StatusCode::UNAUTHORIZED {
            resp.headers_mut().insert(header::WWW_AUTHENTICATE, HeaderValue::from_static("Basic realm=\"vita\""));
        }
        resp
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        Self::bad_request(e.to_string())
    }
}

impl From<ForwardError> for ApiError {
    fn from(e: ForwardError) -> Self {
        match e {
            ForwardError::Journal(j) => Self::internal(j.to_string()),
            other => Self::new(StatusCode::BAD_REQUEST, "invalid_statement", other.to_string()),
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let msg = e.to_string();
        match e {
            ServiceError::UnknownLearner(_) => Self::new(StatusCode::NOT_FOUND, "unknown_learner", msg),
            ServiceError::Engine(EngineError::Unauthorized(_)) => Self::new(StatusCode::FORBIDDEN, "forbidden", msg),
            ServiceError::Engine(EngineError::PathExhausted(_)) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "path_exhausted", msg)
            }
            _ => Self::bad_request(msg),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let msg = e.to_string();
        match e {
            SessionError::UnknownSession(_) => Self::new(StatusCode::NOT_FOUND, "unknown_session", msg),
            SessionError::Tutor(TutorError::Client(_)) => Self::new(StatusCode::BAD_GATEWAY, "llm_failed", msg),
            SessionError::Tutor(TutorError::DialogueComplete) => Self::new(StatusCode::CONFLICT, "dialogue_complete", msg),
            _ => Self::bad_request(msg),
        }
    }
}

impl From<TutorError> for ApiError {
    fn from(e: TutorError) -> Self {
        SessionError::Tutor(e).into()
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Shared = Arc<AppState>;
type Params = Query<BTreeMap<String, String>>;

fn authenticate(state: &AppState, headers: &HeaderMap) -> ApiResult<Principal> {
    state
        .auth
        .authenticate(headers)
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "valid basic auth credentials required"))
}

fn body<T: DeserializeOwned>(bytes: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("request body: {e}")))
}

fn instant(params: &BTreeMap<String, String>, name: &str) -> ApiResult<Option<DateTime<Utc>>> {
    params
        .get(name)
        .map(|v| parse_timestamp(v).map_err(|e| ApiError::bad_request(format!("{name}: {e}"))))
        .transpose()
}

fn number<T: std::str::FromStr>(params: &BTreeMap<String, String>, name: &str) -> ApiResult<Option<T>> {
    params
        .get(name)
        .map(|v| v.parse::<T>().map_err(|_| ApiError::bad_request(format!("{name}: not a valid number: {v:?}"))))
        .transpose()
}

fn tier_param(params: &BTreeMap<String, String>) -> ApiResult<GranularityTier> {
    match params.get("tier") {
        None => Ok(GranularityTier::Noise),
        Some(t) => t.parse().map_err(ApiError::bad_request),
    }
}

fn filter_from(params: &BTreeMap<String, String>) -> ApiResult<QueryFilter> {
    let limit = number::<usize>(params, "limit")?.unwrap_or(DEFAULT_LIMIT);
    if limit == 0 {
        return Err(QueryError::BadLimit.into());
    }
    let f = QueryFilter {
        agent: params.get("agent").cloned(),
        verb: params.get("verb").cloned(),
        since: instant(params, "since")?,
        until: instant(params, "until")?,
        limit: limit.min(MAX_PAGE),
        cursor: params.get("cursor").map(|c| Cursor::decode(c)).transpose()?,
    };
    f.validate()?;
    Ok(f)
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn statements_json(stmts: &[Statement]) -> ApiResult<String> {
    let bodies = stmts
        .iter()
        .map(serialize_statement)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(format!("[{}]", bodies.join(",")))
}

async fn healthz(State(st): State<Shared>) -> Json<Value> {
    let tiers: serde_json::Map<String, Value> = GranularityTier::ALL
        .iter()
        .map(|&t| {
            let stats = st.lrs.stats(t);
            (
                t.as_str().to_string(),
                json!({"count": stats.count, "digest": st.lrs.digest(t), "truncated_bytes": stats.truncated_bytes}),
            )
        })
        .collect();
    Json(json!({
        "status": "ok",
        "mode": if st.mock_mode { "mock" } else { "live" },
        "banner": st.mock_mode.then_some(MOCK_BANNER),
        "llm": st.tutor.client().describe(),
        "tiers": tiers,
    }))
}

async fn post_statements(State(st): State<Shared>, headers: HeaderMap, bytes: Bytes) -> ApiResult<Response> {
    authenticate(&st, &headers)?;
    let value: Value = body(&bytes)?;
    let parse = |v: Value| statement_from_value(v).map_err(|e| ApiError::bad_request(e.to_string()));
    let (outcomes, single) = match value {
        Value::Array(items) => {
            let stmts = items
                .into_iter()
                .enumerate()
                .map(|(i, v)| parse(v).map_err(|e| ApiError::bad_request(format!("statement {i}: {}", e.message))))
                .collect::<ApiResult<Vec<_>>>()?;
            (st.lrs.forward_batch(stmts)?, false)
        }
        v => (vec![st.lrs.forward(parse(v)?)?], true),
    };
    let conflict = outcomes.iter().any(|o| o.outcome == StoreOutcome::Conflict);
    let status = if conflict { StatusCode::CONFLICT } else { StatusCode::OK };
    let body = if single {
        outcome_json(&outcomes[0])
    } else {
        json!({
            "results": outcomes.iter().map(outcome_json).collect::<Vec<_>>(),
            "stored": outcomes.iter().filter(|o| o.outcome == StoreOutcome::Stored).count(),
            "duplicates": outcomes.iter().filter(|o| o.outcome == StoreOutcome::Duplicate).count(),
            "conflicts": outcomes.iter().filter(|o| o.outcome == StoreOutcome::Conflict).count(),
        })
    };
    Ok((status, Json(body)).into_response())
}

fn outcome_json(o: &ForwardOutcome) -> Value {
    let mut v = serde_json::to_value(o).expect("outcome serializes");
    if o.outcome == StoreOutcome::Conflict {
        v["error"] = json!("conflict");
        v["message"] = json!(format!("statement {} already stored with a different body", o.id));
    }
    v
}

async fn get_statements(State(st): State<Shared>, Query(params): Params) -> ApiResult<Response> {
    let f = filter_from(&params)?;
    let page = st.lrs.query(tier_param(&params)?, &f)?;
    let more = match page.next {
        Some(c) => Value::String(c.encode()).to_string(),
        None => "null".into(),
    };
    let body = format!("{{\"statements\":{},\"more\":{more}}}", statements_json(&page.statements)?);
    Ok(json_response(StatusCode::OK, body))
}

async fn export_csv(State(st): State<Shared>, Query(params): Params) -> ApiResult<Response> {
    let f = QueryFilter { limit: DEFAULT_LIMIT, cursor: None, ..filter_from(&params)? };
    let rows = st.lrs.query_all(tier_param(&params)?, &f)?;
    let disposition = format!("attachment; filename=\"{EXPORT_FILE_NAME}\"");
    Ok((
        StatusCode::OK,
        [(header::CONTENT_TYPE, "text/csv; charset=utf-8".to_string()), (header::CONTENT_DISPOSITION, disposition)],
        write_csv(&rows),
    )
        .into_response())
}

async fn analytics_activity(State(st): State<Shared>, Query(params): Params) -> ApiResult<Json<Value>> {
    let window = TimeWindow::new(instant(&params, "since")?, instant(&params, "until")?)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let stmts = st.lrs.snapshot(GranularityTier::Noise);
    let summary = activity_by_learner(&stmts, Some(&window));
    Ok(Json(json!({"total": summary.total(), "rows": summary.rows})))
}

async fn analytics_learner(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let stmts = st.lrs.snapshot(GranularityTier::Noise);
    let detail = learner_detail(&stmts, &id);
    if !detail.found {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "unknown_learner", format!("no statements for {id}")));
    }
    Ok(Json(serde_json::to_value(detail).expect("detail serializes")))
}

fn term_from(st: &AppState, params: &BTreeMap<String, String>) -> ApiResult<Term> {
    let start = match params.get("start") {
        Some(s) => NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| ApiError::bad_request(format!("start: {e}")))?,
        None => st.term.start,
    };
    let weeks = number::<u32>(params, "weeks")?.unwrap_or(st.term.weeks);
    Term::new(start, weeks).map_err(|e| ApiError::bad_request(e.to_string()))
}

async fn analytics_weekly(State(st): State<Shared>, Query(params): Params) -> ApiResult<Json<Value>> {
    let term = term_from(&st, &params)?;
    let stmts = st.lrs.snapshot(GranularityTier::Noise);
    Ok(Json(serde_json::to_value(weekly_summary(&stmts, term)).expect("summary serializes")))
}

/// `method` is `percentile` (default, `param` 0.10) or `zscore` (`param` -1.5
/// by default); `conjunction` is `or` (default) or `and`.
pub fn outlier_spec(params: &BTreeMap<String, String>) -> Result<OutlierSpec, String> {
    let method = match params.get("method").map(String::as_str) {
        None | Some("percentile") => OutlierMethod::Percentile,
        Some("zscore") => OutlierMethod::Zscore,
        Some(other) => return Err(format!("method: expected percentile or zscore, got {other:?}")),
    };
    let parameter = match params.get("param") {
        Some(p) => p.parse::<f64>().map_err(|_| format!("param: not a number: {p:?}"))?,
        None if method == OutlierMethod::Zscore => -1.5,
        None => 0.10,
    };
    let conjunction = match params.get("conjunction").map(String::as_str) {
        None | Some("or") => Conjunction::Or,
        Some("and") => Conjunction::And,
        Some(other) => return Err(format!("conjunction: expected or/and, got {other:?}")),
    };
    let spec = OutlierSpec { method, parameter, conjunction };
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

async fn analytics_outliers(State(st): State<Shared>, Query(params): Params) -> ApiResult<Json<Value>> {
    let spec = outlier_spec(&params).map_err(ApiError::bad_request)?;
    let term = term_from(&st, &params)?;
    let stmts = st.lrs.snapshot(GranularityTier::Noise);
    let summary = activity_by_learner(&stmts, None);
    let weekly = weekly_summary(&stmts, term);
    let report = detect_outliers(&summary, &weekly, spec, st.clock.now()).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(serde_json::to_value(report).expect("report serializes")))
}

/// Stores the decision statement an engine action produced, if any.
fn record(st: &AppState, s: Option<Statement>) -> ApiResult<()> {
    if let Some(s) = s {
        st.lrs.forward(s)?;
    }
    Ok(())
}

async fn engine_score(State(st): State<Shared>, headers: HeaderMap, bytes: Bytes) -> ApiResult<Json<Value>> {
    authenticate(&st, &headers)?;
    let req: ScoreRequest = body(&bytes)?;
    let mut out = st.engine.score(req, st.lrs.registry(), st.clock.now())?;
    record(&st, out.statement.take())?;
    Ok(Json(serde_json::to_value(out).expect("decision serializes")))
}

async fn engine_override(State(st): State<Shared>, headers: HeaderMap, bytes: Bytes) -> ApiResult<Json<Value>> {
    let principal = authenticate(&st, &headers)?;
    let req: OverrideRequest = body(&bytes)?;
    let mut out = st.engine.override_path(req, &principal, st.lrs.registry(), st.clock.now())?;
    record(&st, out.statement.take())?;
    Ok(Json(serde_json::to_value(out).expect("decision serializes")))
}

async fn engine_advance(State(st): State<Shared>, headers: HeaderMap, bytes: Bytes) -> ApiResult<Json<Value>> {
    authenticate(&st, &headers)?;
    let req: AdvanceRequest = body(&bytes)?;
    Ok(Json(serde_json::to_value(st.engine.advance(&req)?).expect("next serializes")))
}

async fn engine_next(State(st): State<Shared>, Path(learner): Path<String>) -> ApiResult<Response> {
    let next = st.engine.next(&learner)?;
    let status = if next.exhausted.is_some() { StatusCode::UNPROCESSABLE_ENTITY } else { StatusCode::OK };
    Ok((status, Json(next)).into_response())
}

async fn engine_state(State(st): State<Shared>, Path(learner): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(serde_json::to_value(st.engine.state(&learner)?).expect("state serializes")))
}

async fn tutor_create(State(st): State<Shared>, headers: HeaderMap, bytes: Bytes) -> ApiResult<Json<Value>> {
    authenticate(&st, &headers)?;
    let req: CreateSession = body(&bytes)?;
    Ok(Json(serde_json::to_value(st.tutor.create(req)?).expect("session serializes")))
}

fn store_all(st: &AppState, stmts: Vec<Statement>) -> ApiResult<()> {
    st.lrs.forward_batch(stmts)?;
    Ok(())
}

async fn tutor_turn(State(st): State<Shared>, headers: HeaderMap, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Json<Value>> {
    authenticate(&st, &headers)?;
    let req: TurnRequest = body(&bytes)?;
    let st2 = st.clone();
    // The client may block on network I/O.
    let mut out = tokio::task::spawn_blocking(move || st2.tutor.turn(&id, &req, st2.lrs.registry(), st2.clock.now()))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    store_all(&st, std::mem::take(&mut out.emitted))?;
    Ok(Json(serde_json::to_value(out).expect("reply serializes")))
}

async fn tutor_socratic(State(st): State<Shared>, headers: HeaderMap, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Json<Value>> {
    authenticate(&st, &headers)?;
    let req: SocraticRequest = if bytes.is_empty() { SocraticRequest::default() } else { body(&bytes)? };
    let mut out = st.tutor.socratic(&id, req, st.lrs.registry(), st.clock.now())?;
    store_all(&st, std::mem::take(&mut out.emitted))?;
    Ok(Json(serde_json::to_value(out).expect("reply serializes")))
}

async fn tutor_get(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(serde_json::to_value(st.tutor.get(&id)?).expect("session serializes")))
}

async fn tutor_templates(State(st): State<Shared>) -> Json<Value> {
    let list: Vec<Value> = st
        .tutor
        .templates()
        .iter()
        .map(|t| json!({"id": t.id, "scenario": t.scenario, "slots": t.slots().iter().map(|s| &s.name).collect::<Vec<_>>()}))
        .collect();
    Json(Value::Array(list))
}

async fn tutor_render(State(st): State<Shared>, bytes: Bytes) -> ApiResult<Json<Value>> {
    let req: RenderRequest = body(&bytes)?;
    Ok(Json(json!({"prompt": st.tutor.render(&req)?})))
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/xapi/statements", post(post_statements).get(get_statements))
        .route("/xapi/export.csv", get(export_csv))
        .route("/analytics/activity", get(analytics_activity))
        .route("/analytics/learner/{id}", get(analytics_learner))
        .route("/analytics/weekly", get(analytics_weekly))
        .route("/analytics/outliers", get(analytics_outliers))
        .route("/engine/score", post(engine_score))
        .route("/engine/override", post(engine_override))
        .route("/engine/advance", post(engine_advance))
        .route("/engine/next/{learner}", get(engine_next))
        .route("/engine/state/{learner}", get(engine_state))
        .route("/tutor/templates", get(tutor_templates))
        .route("/tutor/render", post(tutor_render))
        .route("/tutor/session", post(tutor_create))
        .route("/tutor/session/{id}", get(tutor_get))
        .route("/tutor/session/{id}/turn", post(tutor_turn))
        .route("/tutor/session/{id}/socratic", post(tutor_socratic))
        .with_state(state)
}

/// Serves until `shutdown` resolves, then syncs every journal to disk.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Shared,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state.clone())).with_graceful_shutdown(shutdown).await?;
    state.lrs.flush().map_err(std::io::Error::other)
}
