//! HTTP review API over a complyscan ledger.
//!
//! Every GET opens its own read-only store handle, so a response reflects
//! one committed snapshot and cannot write. Staleness is evaluated at
//! request time and never persisted by this crate.

mod error;
mod query;

use std::collections::{BTreeSet, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use complyscan_core::ledger::{is_stale, FileQuery, Ledger, SqliteLedger};
use complyscan_core::{FileRecord, FileStatus, MachineConfig, MachineId, Timestamp};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

pub use error::ApiError;
use query::Params;

/// Largest accepted `limit` on `/api/files`.
pub const MAX_LIMIT: u64 = 1000;
pub const DEFAULT_LIMIT: u64 = 100;
pub const TOTAL_COUNT_HEADER: &str = "x-total-count";

#[derive(Debug, Clone)]
pub struct AppState {
    pub store: PathBuf,
    /// Directory of built dashboard assets served at `/`.
    pub ui_dir: Option<PathBuf>,
    /// Fixed request time; `None` uses the wall clock.
    pub clock: Option<Timestamp>,
}

impl AppState {
    pub fn new(store: impl Into<PathBuf>) -> Self {
        AppState {
            store: store.into(),
            ui_dir: None,
            clock: None,
        }
    }

    fn now(&self) -> Timestamp {
        self.clock.unwrap_or_else(Timestamp::now)
    }
}

type Shared = Arc<AppState>;

pub fn router(state: AppState) -> Router {
    let ui_dir = state.ui_dir.clone();
    let api = Router::new()
        .route("/api/machines", get(machines))
        .route("/api/files", get(files))
        .route("/api/files/history", get(history))
        .route("/api/reminders", post(add_reminder))
        .route("/api/summary", get(summary))
        .with_state(Arc::new(state));
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api.route("/", get(builtin_index)).fallback(not_found),
    }
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("review API listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

/// Blocking wrapper around [`serve`] with its own runtime.
pub fn serve_blocking(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(serve(addr, state))
}

async fn with_store<T, F>(state: Shared, write: bool, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&mut SqliteLedger, &AppState) -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || {
        let mut ledger = if write {
            SqliteLedger::open(&state.store)
        } else {
            SqliteLedger::open_read_only(&state.store)
        }?;
        f(&mut ledger, &state)
    })
    .await
    .map_err(|e| ApiError::Internal(format!("request task failed: {e}")))?
}

async fn machines(
    State(state): State<Shared>,
    Query(raw): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let mut params = Params::new(raw);
    let stale = params.take_bool("stale")?;
    params.finish()?;
    let rows = with_store(state, false, move |ledger, state| {
        let now = state.now();
        Ok(ledger
            .list_machines()?
            .into_iter()
            .map(|m| m.with_staleness_at(now))
            .filter(|m| stale.is_none_or(|s| m.stale == s))
            .collect::<Vec<MachineConfig>>())
    })
    .await?;
    Ok(Json(rows).into_response())
}

async fn files(State(state): State<Shared>, Query(raw): Query<HashMap<String, String>>) -> Result<Response, ApiError> {
    let mut params = Params::new(raw);
    let filter = FileQuery {
        mac: params.take_parsed::<MachineId>("mac")?,
        format: params.take_parsed("format")?,
        status: params.take_parsed::<FileStatus>("status")?,
        scanned_after: params.take_parsed("scanned_after")?,
        scanned_before: params.take_parsed("scanned_before")?,
        version: params.take_parsed("version")?,
    };
    let stale_only = params.take_bool("stale_only")?.unwrap_or(false);
    let limit = params.take_parsed::<u64>("limit")?.unwrap_or(DEFAULT_LIMIT);
    if limit > MAX_LIMIT {
        return Err(ApiError::bad("limit", format!("must be at most {MAX_LIMIT}")));
    }
    let offset = params.take_parsed::<u64>("offset")?.unwrap_or(0);
    params.finish()?;

    let (rows, total) = with_store(state, false, move |ledger, state| {
        if !stale_only {
            return Ok(ledger.query_files_page(&filter, limit, offset)?);
        }
        let now = state.now();
        let stale_macs: BTreeSet<MachineId> = ledger
            .list_machines()?
            .into_iter()
            .map(|m| m.with_staleness_at(now))
            .filter(|m| m.stale)
            .map(|m| m.mac)
            .collect();
        let all: Vec<FileRecord> = ledger
            .query_files(&filter)?
            .into_iter()
            .filter(|r| stale_macs.contains(&r.mac))
            .collect();
        let total = all.len() as u64;
        let page = all.into_iter().skip(offset as usize).take(limit as usize).collect();
        Ok((page, total))
    })
    .await?;

    let mut headers = HeaderMap::new();
    headers.insert(TOTAL_COUNT_HEADER, HeaderValue::from(total));
    Ok((headers, Json(rows)).into_response())
}

async fn history(
    State(state): State<Shared>,
    Query(raw): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let mut params = Params::new(raw);
    let mac = params.require_parsed::<MachineId>("mac")?;
    let path = params.require("path")?;
    params.finish()?;
    let rows = with_store(state, false, move |ledger, _| Ok(ledger.file_history(&mac, &path)?)).await?;
    Ok(Json(rows).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReminderBody {
    username: String,
    mac: String,
    #[serde(default)]
    note: String,
}

async fn add_reminder(State(state): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    if let Some(ct) = headers.get(header::CONTENT_TYPE) {
        let ct = ct.to_str().unwrap_or("");
        if !ct.starts_with("application/json") {
            return Err(ApiError::bad("content-type", "expected application/json"));
        }
    }
    let body: ReminderBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad("body", format!("not a reminder object: {e}")))?;
    if body.username.trim().is_empty() {
        return Err(ApiError::bad("username", "must not be empty"));
    }
    let mac: MachineId = body.mac.parse().map_err(|e| ApiError::bad("mac", format!("{e}")))?;
    let record = with_store(state, true, move |ledger, state| {
        Ok(ledger.add_reminder(&body.username, &mac, &body.note, state.now())?)
    })
    .await?;
    log::info!(
        "reminder {} flagged for {} on {}",
        record.id,
        record.username,
        record.mac
    );
    Ok((StatusCode::CREATED, Json(record)).into_response())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub machines: u64,
    pub stale_machines: u64,
    pub files_latest: u64,
    pub files_deleted: u64,
    pub last_scan_time: Option<Timestamp>,
}

async fn summary(
    State(state): State<Shared>,
    Query(raw): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    Params::new(raw).finish()?;
    let summary = with_store(state, false, |ledger, state| {
        let now = state.now();
        let machines = ledger.list_machines()?;
        Ok(Summary {
            machines: machines.len() as u64,
            stale_machines: machines
                .iter()
                .filter(|m| is_stale(now, m.last_scanned, m.scan_frequency))
                .count() as u64,
            files_latest: ledger.count_by_status(FileStatus::Latest)?,
            files_deleted: ledger.count_by_status(FileStatus::Deleted)?,
            last_scan_time: machines.iter().filter_map(|m| m.last_scanned).max(),
        })
    })
    .await?;
    Ok(Json(summary).into_response())
}

async fn builtin_index() -> Html<&'static str> {
    Html(include_str!("index.html"))
}

async fn not_found() -> ApiError {
    ApiError::NotFound("no such route".into())
}
