//! HTTP API over a loaded catalog.
//!
//! | route | |
//! |---|---|
//! | `GET /cone?ra&dec&radius[&view&where&select&limit]` | cone search, radius in degrees |
//! | `GET /nearest?ra&dec[&r]` | nearest primary object, `r` in arcminutes (default 1) |
//! | `GET /object/{objID}` | full record with field, spectrum and neighbors |
//! | `POST /query` | `{view, where, select, limit, timeout, format}` |
//! | `GET /tiles/{zoom}/{tx}/{ty}` | 256×256 PNG |
//! | `GET /admin/events`, `POST /admin/undo/{eventID}` | bearer token required |
//!
//! Row limits and timeouts requested by clients are clamped to the configured caps.
//! Errors are `{"error": {"code", "message"}}`.

mod config;
pub mod tiles;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

pub use config::{ServiceConfig, ENV_VARS};
pub use tiles::TileAddress;

use crate::filterql::FilterError;
use crate::loader::{EventStatus, LoadEvent, Loader, LoaderError};
use crate::query::{self, ConeRequest, QueryError, QueryRequest, ResultSet};
use crate::store::{CatalogState, Table, TableName, Value};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Loader(#[from] LoaderError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// An error response.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    position: Option<(usize, usize)>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into(), position: None }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::Filter(f) => {
                let position = match &f {
                    FilterError::Syntax { line, column, .. } | FilterError::UnknownFunction { line, column, .. } => {
                        Some((*line, *column))
                    }
                    _ => None,
                };
                Self { position, ..Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_filter", f.to_string()) }
            }
            QueryError::UnknownView(_) => Self::new(StatusCode::BAD_REQUEST, "unknown_view", e.to_string()),
            QueryError::UnknownColumn { .. } => Self::new(StatusCode::BAD_REQUEST, "unknown_column", e.to_string()),
            other => Self::bad_request(other.to_string()),
        }
    }
}

impl From<LoaderError> for ApiError {
    fn from(e: LoaderError) -> Self {
        match e {
            LoaderError::UnknownEvent(_) => Self::not_found(e.to_string()),
            LoaderError::Dependency { .. } => Self::new(StatusCode::CONFLICT, "dependency", e.to_string()),
            LoaderError::AlreadyUndone(_) | LoaderError::NotUndoable(_) | LoaderError::Busy(_) => {
                Self::new(StatusCode::CONFLICT, "conflict", e.to_string())
            }
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = serde_json::json!({ "code": self.code, "message": self.message });
        if let Some((line, column)) = self.position {
            body["line"] = line.into();
            body["column"] = column.into();
        }
        (self.status, Json(serde_json::json!({ "error": body }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct AppState {
    loader: Arc<Loader>,
    config: ServiceConfig,
}

impl AppState {
    fn snapshot(&self) -> Arc<CatalogState> {
        self.loader.catalog().snapshot()
    }

    fn limit(&self, requested: Option<usize>) -> usize {
        requested.unwrap_or(self.config.row_cap).min(self.config.row_cap)
    }

    fn timeout(&self, requested: Option<f64>) -> ApiResult<Duration> {
        let cap = self.config.timeout();
        match requested {
            None => Ok(cap),
            Some(t) if t.is_finite() && t > 0.0 => Ok(Duration::from_secs_f64(t).min(cap)),
            Some(t) => Err(ApiError::bad_request(format!("timeout {t} must be a positive number of seconds"))),
        }
    }
}

type Shared = Arc<AppState>;

pub fn router(loader: Arc<Loader>, config: ServiceConfig) -> Router {
    let state = Arc::new(AppState { loader, config });
    Router::new()
        .route("/cone", get(cone))
        .route("/nearest", get(nearest))
        .route("/object/{id}", get(object))
        .route("/query", post(run_query))
        .route("/tiles/{zoom}/{tx}/{ty}", get(tile))
        .route("/admin/events", get(admin_events))
        .route("/admin/undo/{id}", post(admin_undo))
        .with_state(state)
}

/// Opens the data directory and serves until interrupted.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let loader = Arc::new(Loader::open(&config.data_dir)?);
    let listener = tokio::net::TcpListener::bind(&config.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, data = %config.data_dir.display(), "listening");
    axum::serve(listener, router(loader, config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

/// Rounds `elapsed` to whole seconds so payloads are reproducible.
pub fn stable(mut rs: ResultSet) -> ResultSet {
    rs.elapsed = rs.elapsed.round();
    rs
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))
}

struct Params(HashMap<String, String>);

impl Params {
    fn text(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> ApiResult<Option<T>> {
        self.text(key)
            .map(|v| v.parse().map_err(|_| ApiError::bad_request(format!("parameter '{key}' has invalid value '{v}'"))))
            .transpose()
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> ApiResult<T> {
        self.parse(key)?.ok_or_else(|| ApiError::bad_request(format!("missing parameter '{key}'")))
    }

    fn list(&self, key: &str) -> Option<Vec<String>> {
        self.text(key).map(|v| v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
    }
}

/// The service's cone request for the given query parameters, with caps applied.
fn cone_request(app: &AppState, p: &Params) -> ApiResult<ConeRequest> {
    let mut req = ConeRequest::new(p.required("ra")?, p.required("dec")?, p.required("radius")?);
    if let Some(v) = p.text("view") {
        req.view = v.to_string();
    }
    req.predicate = p.text("where").map(str::to_string);
    req.projection = p.list("select");
    req.limit = app.limit(p.parse("limit")?);
    req.timeout = app.timeout(p.parse("timeout")?)?;
    Ok(req)
}

async fn cone(State(app): State<Shared>, Query(params): Query<HashMap<String, String>>) -> ApiResult<Json<ResultSet>> {
    let req = cone_request(&app, &Params(params))?;
    let snap = app.snapshot();
    let rs = blocking(move || query::cone_search(&snap, &req)).await??;
    Ok(Json(stable(rs)))
}

#[derive(Serialize)]
struct NearestDoc {
    object: Option<query::ObjectHit>,
}

async fn nearest(State(app): State<Shared>, Query(params): Query<HashMap<String, String>>) -> ApiResult<Json<NearestDoc>> {
    let p = Params(params);
    let (ra, dec): (f64, f64) = (p.required("ra")?, p.required("dec")?);
    let r: f64 = p.parse("r")?.unwrap_or(1.0);
    let snap = app.snapshot();
    let object = blocking(move || query::f_get_nearest_obj_eq(&snap, ra, dec, r)).await??;
    Ok(Json(NearestDoc { object }))
}

/// A table row as an object keyed by column name, in schema order, without `loadTime`.
pub struct Record(Vec<(&'static str, Value)>);

impl Record {
    pub fn of(table: &Table, row: usize) -> Self {
        let skip = table.schema().load_time_index();
        Record(
            table.schema().columns.iter().enumerate().filter(|(i, _)| *i != skip).map(|(i, c)| (c.name, table.get(row, i))).collect(),
        )
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.0.iter().find(|(n, _)| *n == name).map(|(_, v)| v)
    }
}

impl Serialize for Record {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SpectrumDoc {
    #[serde(flatten)]
    pub spec_obj: Record,
    pub lines: Vec<Record>,
    pub line_indices: Vec<Record>,
    pub xc_redshift: Option<Record>,
    pub el_redshift: Option<Record>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ObjectDoc {
    pub photo_obj: Record,
    pub field: Option<Record>,
    pub spec_obj: Option<SpectrumDoc>,
    pub neighbors: Vec<Record>,
}

fn rows_where(t: &Table, col: &str, key: i64) -> Vec<usize> {
    t.ints(col).iter().enumerate().filter(|(_, v)| **v == key).map(|(i, _)| i).collect()
}

/// The full record of one object, or `None` if no PhotoObj row has that objID.
pub fn object_document(state: &CatalogState, obj_id: i64) -> Option<ObjectDoc> {
    let photo = state.table(TableName::PhotoObj);
    let row = photo.find(obj_id)?;
    let keyed = |t: TableName, key: i64| {
        let t = state.table(t);
        t.find(key).map(|r| Record::of(t, r))
    };
    let spec_id = photo.ints("specObjID")[row];
    let spec_obj = keyed(TableName::SpecObj, spec_id).map(|spec_obj| {
        let lines_t = state.table(TableName::SpecLine);
        let mut lines = rows_where(lines_t, "specObjID", spec_id);
        let (wl, ids) = (lines_t.floats("wavelength"), lines_t.ints("lineID"));
        lines.sort_by(|a, b| wl[*a].total_cmp(&wl[*b]).then(ids[*a].cmp(&ids[*b])));
        let idx_t = state.table(TableName::SpecLineIndex);
        SpectrumDoc {
            spec_obj,
            lines: lines.into_iter().map(|r| Record::of(lines_t, r)).collect(),
            line_indices: rows_where(idx_t, "specObjID", spec_id).into_iter().map(|r| Record::of(idx_t, r)).collect(),
            xc_redshift: keyed(TableName::XCRedshift, spec_id),
            el_redshift: keyed(TableName::ElRedshift, spec_id),
        }
    });
    let nb = state.table(TableName::Neighbors);
    let mut neighbors = rows_where(nb, "objID", obj_id);
    let other = nb.ints("neighborObjID");
    neighbors.sort_by_key(|r| other[*r]);
    Some(ObjectDoc {
        photo_obj: Record::of(photo, row),
        field: keyed(TableName::Field, photo.ints("fieldID")[row]),
        spec_obj,
        neighbors: neighbors.into_iter().map(|r| Record::of(nb, r)).collect(),
    })
}

async fn object(State(app): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<ObjectDoc>> {
    let id: i64 = id.parse().map_err(|_| ApiError::bad_request(format!("'{id}' is not an objID")))?;
    let snap = app.snapshot();
    blocking(move || object_document(&snap, id))
        .await?
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("no object {id}")))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryBody {
    pub view: Option<String>,
    #[serde(rename = "where")]
    pub predicate: Option<String>,
    pub select: Option<Vec<String>>,
    pub limit: Option<usize>,
    /// Seconds.
    pub timeout: Option<f64>,
    pub format: Option<String>,
}

/// Renders a result set in the loader's CSV dialect.
pub fn result_csv(rs: &ResultSet) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(rs.columns.iter().map(|c| c.name.as_str())).expect("in-memory csv");
    for row in &rs.rows {
        w.write_record(row.iter().map(|v| if v.is_null() { String::new() } else { v.to_string() })).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

async fn run_query(State(app): State<Shared>, body: axum::body::Bytes) -> ApiResult<Response> {
    let body: QueryBody = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("request body: {e}")))?;
    let csv = match body.format.as_deref() {
        None | Some("json") => false,
        Some("csv") => true,
        Some(f) => return Err(ApiError::bad_request(format!("unknown format '{f}'; expected json or csv"))),
    };
    let view = body.view.ok_or_else(|| ApiError::bad_request("missing 'view'"))?;
    let mut req = QueryRequest::new(&view).limit(app.limit(body.limit)).timeout(app.timeout(body.timeout)?);
    req.predicate = body.predicate;
    req.projection = body.select;
    let snap = app.snapshot();
    let rs = stable(blocking(move || query::query(&snap, &req)).await??);
    if !csv {
        return Ok(Json(rs).into_response());
    }
    let flag = |b: bool| HeaderValue::from_static(if b { "true" } else { "false" });
    let mut headers = HeaderMap::new();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("text/csv; charset=utf-8"));
    headers.insert("x-skycat-truncated", flag(rs.truncated));
    headers.insert("x-skycat-timed-out", flag(rs.timed_out));
    Ok((headers, result_csv(&rs)).into_response())
}

async fn tile(State(app): State<Shared>, Path((zoom, tx, ty)): Path<(String, String, String)>) -> ApiResult<Response> {
    let addr = match (zoom.parse(), tx.parse(), ty.parse()) {
        (Ok(z), Ok(x), Ok(y)) => TileAddress::new(z, x, y),
        _ => None,
    }
    .ok_or_else(|| ApiError::not_found(format!("no tile {zoom}/{tx}/{ty}")))?;
    let snap = app.snapshot();
    let png = blocking(move || tiles::render_tile(&snap, addr)).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

fn authorize(app: &AppState, headers: &HeaderMap) -> ApiResult<()> {
    let given = headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok()).and_then(|v| v.strip_prefix("Bearer "));
    match (&app.config.admin_token, given) {
        (Some(token), Some(g)) if token == g => Ok(()),
        _ => Err(ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "admin token required")),
    }
}

#[derive(Serialize)]
struct EventsDoc {
    events: Vec<LoadEvent>,
}

async fn admin_events(
    State(app): State<Shared>,
    headers: HeaderMap,
    Query(params): Query<HashMap<String, String>>,
) -> ApiResult<Json<EventsDoc>> {
    authorize(&app, &headers)?;
    let p = Params(params);
    let table: Option<TableName> = p.parse("table")?;
    let status: Option<EventStatus> = p.parse("status")?;
    Ok(Json(EventsDoc { events: app.loader.list_events(table, status) }))
}

#[derive(Serialize)]
struct UndoDoc {
    #[serde(rename = "eventID")]
    event_id: u64,
    deleted: usize,
}

async fn admin_undo(State(app): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Json<UndoDoc>> {
    authorize(&app, &headers)?;
    let event_id: u64 = id.parse().map_err(|_| ApiError::bad_request(format!("'{id}' is not an event id")))?;
    let loader = app.loader.clone();
    let deleted = blocking(move || loader.undo(event_id)).await??;
    Ok(Json(UndoDoc { event_id, deleted }))
}
