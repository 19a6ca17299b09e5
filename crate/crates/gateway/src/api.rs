use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use arena_core::analytics::{LeaderboardFilter, LeaderboardRow};
use arena_core::persistence::EquitySeries;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::registry::{Registry, RunHandle, RunMode, RunStatus};

#[derive(Clone)]
pub struct AppState {
    pub registry: Arc<Registry>,
    /// Relative `run_dir` values in replay requests resolve against this.
    pub data_root: PathBuf,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/leaderboard", get(leaderboard))
        .route("/equity", get(equity))
        .route("/runs", get(runs))
        .route("/runs/replay", post(replay))
        .route("/runs/:id/stop", post(stop))
        .with_state(state)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

/// Parses the four filter axes; each takes a comma-separated list.
pub fn parse_filter(params: &HashMap<String, String>) -> Result<LeaderboardFilter, String> {
    let mut filter = LeaderboardFilter::default();
    for (key, value) in params {
        let set: BTreeSet<String> = value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        match key.as_str() {
            "agents" => filter.agents = set,
            "assets" => filter.assets = set,
            "models" => filter.models = set,
            "strategies" => filter.strategies = set,
            other => {
                return Err(format!(
                    "unknown query parameter `{other}`; expected agents, assets, models or strategies"
                ))
            }
        }
    }
    Ok(filter)
}

fn etag(version: u64) -> HeaderValue {
    HeaderValue::from_str(&format!("\"{version}\"")).expect("ascii")
}

fn not_modified(headers: &HeaderMap, version: u64) -> bool {
    headers
        .get(header::IF_NONE_MATCH)
        .is_some_and(|v| v.as_bytes() == etag(version).as_bytes())
}

fn versioned<T: Serialize>(version: u64, body: T) -> Response {
    let mut resp = Json(body).into_response();
    resp.headers_mut().insert(header::ETAG, etag(version));
    resp
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

/// One leaderboard row as served to the dashboard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardItem {
    pub rank: usize,
    pub agent: String,
    pub model: String,
    pub asset: String,
    pub strategy: String,
    pub as_of: NaiveDate,
    pub periods: usize,
    pub cr: f64,
    pub cr_no_fees: f64,
    pub ar: f64,
    pub av: Option<f64>,
    pub sr: Option<f64>,
    pub mdd: f64,
    pub balance: f64,
    /// Not defined by the metrics core; always null.
    pub win_rate: Option<f64>,
}

impl From<&LeaderboardRow> for LeaderboardItem {
    fn from(r: &LeaderboardRow) -> Self {
        let (e, m) = (&r.entry, &r.entry.metrics);
        Self {
            rank: r.rank,
            agent: e.agent.clone(),
            model: e.model.clone(),
            asset: e.asset.clone(),
            strategy: e.strategy.clone(),
            as_of: m.as_of,
            periods: m.periods,
            cr: m.cr,
            cr_no_fees: e.cr_gross,
            ar: m.ar,
            av: m.av,
            sr: m.sr,
            mdd: m.mdd,
            balance: e.balance,
            win_rate: None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LeaderboardResponse {
    pub version: u64,
    pub rows: Vec<LeaderboardItem>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EquityResponse {
    pub version: u64,
    pub series: Vec<EquitySeries>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunsResponse {
    pub version: u64,
    pub runs: Vec<RunHandle>,
}

async fn leaderboard(
    State(app): State<AppState>,
    headers: HeaderMap,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let filter = match parse_filter(&params) {
        Ok(f) => f,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    let snap = app.registry.snapshot();
    if not_modified(&headers, snap.version) {
        return StatusCode::NOT_MODIFIED.into_response();
    }
    let rows = snap.leaderboard(&filter).iter().map(LeaderboardItem::from).collect();
    versioned(
        snap.version,
        LeaderboardResponse {
            version: snap.version,
            rows,
        },
    )
}

async fn equity(
    State(app): State<AppState>,
    headers: HeaderMap,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let filter = match parse_filter(&params) {
        Ok(f) => f,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    let snap = app.registry.snapshot();
    if not_modified(&headers, snap.version) {
        return StatusCode::NOT_MODIFIED.into_response();
    }
    versioned(
        snap.version,
        EquityResponse {
            version: snap.version,
            series: snap.equity(&filter),
        },
    )
}

async fn runs(State(app): State<AppState>, Query(params): Query<HashMap<String, String>>) -> Response {
    if let Some(k) = params.keys().next() {
        return error(StatusCode::BAD_REQUEST, format!("unknown query parameter `{k}`"));
    }
    let snap = app.registry.snapshot();
    versioned(
        snap.version,
        RunsResponse {
            version: snap.version,
            runs: snap.runs.values().map(|r| r.handle.clone()).collect(),
        },
    )
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayRequest {
    pub run_dir: PathBuf,
}

async fn replay(State(app): State<AppState>, Json(req): Json<ReplayRequest>) -> Response {
    let dir = if req.run_dir.is_absolute() {
        req.run_dir
    } else {
        app.data_root.join(req.run_dir)
    };
    let registry = app.registry.clone();
    let result = tokio::task::spawn_blocking(move || register_replay(&registry, &dir)).await;
    match result {
        Ok(Ok(handle)) => (StatusCode::CREATED, Json(handle)).into_response(),
        Ok(Err(crate::GatewayError::Registry(m))) => error(StatusCode::CONFLICT, m),
        Ok(Err(e)) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

/// Folds a run directory's log and publishes it as a replay run.
pub fn register_replay(registry: &Registry, dir: &std::path::Path) -> Result<RunHandle, crate::GatewayError> {
    let state = crate::replay_dir(dir)?;
    let run_id = state
        .run_id
        .clone()
        .unwrap_or_else(|| dir.file_name().map_or("run".into(), |n| n.to_string_lossy().into_owned()));
    let handle = RunHandle {
        run_id: run_id.clone(),
        mode: RunMode::Replay,
        status: RunStatus::WarmingUp,
        started: Utc::now(),
    };
    registry.register(handle, state)?;
    registry.set_status(&run_id, RunStatus::Running)?;
    Ok(registry.snapshot().runs[&run_id].handle.clone())
}

async fn stop(State(app): State<AppState>, Path(id): Path<String>) -> Response {
    match app.registry.request_stop(&id) {
        Ok(status) => (StatusCode::ACCEPTED, Json(json!({ "run_id": id, "status": status }))).into_response(),
        Err(e) => error(StatusCode::NOT_FOUND, e.to_string()),
    }
}
