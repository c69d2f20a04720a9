//! Read-only HTTP service over one loaded session.
//!
//! Every route is a GET returning a JSON body with `schema_version: 1`.
//! Failures return `{"schema_version":1,"error":{"code","message"}}` with
//! status 400 for bad parameters and 404 for unknown routes.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use serde::Serialize;

use emofuse_core::anomaly::{mapped_anomalies, raw_anomalies, AnomalyRecord};
use emofuse_core::error::{Error, ErrorCode};
use emofuse_core::insights::{IndexedRecord, TimelineDocument, SCHEMA_VERSION};
use emofuse_core::session::{parse_flag, parse_min_run, run_query, QueryRequest, SessionDataset};

pub const DEFAULT_PAGE: usize = 100;
pub const MAX_PAGE: usize = 1000;

type Params = BTreeMap<String, String>;
type Shared = Arc<SessionDataset>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::bad_request(e.code().as_str(), e.message())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::bad_request(ErrorCode::Param.as_str(), e.body_text())
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    code: &'a str,
    message: &'a str,
}

#[derive(Serialize)]
struct ErrorDoc<'a> {
    schema_version: u32,
    error: ErrorBody<'a>,
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let doc = ErrorDoc {
            schema_version: SCHEMA_VERSION,
            error: ErrorBody {
                code: self.code,
                message: &self.message,
            },
        };
        json_response(self.status, serde_json::to_string(&doc).expect("error serializes"))
    }
}

fn ok<T: Serialize>(value: &T) -> Response {
    json_response(StatusCode::OK, serde_json::to_string(value).expect("payload serializes"))
}

type ApiResult = Result<Response, ApiError>;

fn params(query: Result<Query<Params>, QueryRejection>) -> Result<Params, ApiError> {
    Ok(query?.0)
}

fn reject_unknown(params: &Params, allowed: &[&str]) -> Result<(), ApiError> {
    match params.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(ApiError::bad_request(
            ErrorCode::Param.as_str(),
            format!("unknown parameter '{k}'"),
        )),
        None => Ok(()),
    }
}

fn parse_count(params: &Params, key: &str, default: usize) -> Result<usize, ApiError> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v.trim().parse().map_err(|_| {
            ApiError::bad_request(
                ErrorCode::Param.as_str(),
                format!("parameter '{key}' must be a non-negative integer, got '{v}'"),
            )
        }),
    }
}

async fn session_info(State(session): State<Shared>) -> Response {
    ok(&session.info())
}

#[derive(Serialize)]
struct RecordsPage {
    schema_version: u32,
    total: usize,
    offset: usize,
    limit: usize,
    records: Vec<IndexedRecord>,
}

async fn records(State(session): State<Shared>, query: Result<Query<Params>, QueryRejection>) -> ApiResult {
    let params = params(query)?;
    reject_unknown(&params, &["offset", "limit"])?;
    let offset = parse_count(&params, "offset", 0)?;
    let limit = parse_count(&params, "limit", DEFAULT_PAGE)?;
    if limit == 0 || limit > MAX_PAGE {
        return Err(ApiError::bad_request(
            ErrorCode::Param.as_str(),
            format!("limit must be between 1 and {MAX_PAGE}, got {limit}"),
        ));
    }
    let page = session
        .fused
        .iter()
        .enumerate()
        .skip(offset)
        .take(limit)
        .map(|(index, r)| IndexedRecord {
            index,
            record: r.clone(),
        })
        .collect();
    Ok(ok(&RecordsPage {
        schema_version: SCHEMA_VERSION,
        total: session.fused.len(),
        offset,
        limit,
        records: page,
    }))
}

async fn timeline(State(session): State<Shared>, query: Result<Query<Params>, QueryRejection>) -> ApiResult {
    let params = params(query)?;
    reject_unknown(&params, &["min_run"])?;
    let min_run = match params.get("min_run") {
        Some(v) => parse_min_run(v)?,
        None => session.config.min_run_s,
    };
    Ok(ok(&TimelineDocument::new(&session.timeline_at(min_run), min_run)))
}

#[derive(Serialize)]
struct AnomalyDoc<'a> {
    schema_version: u32,
    mode: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    mapping: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    include_neutral: Option<bool>,
    count: usize,
    records: Vec<AnomalyRecord>,
}

async fn anomalies(State(session): State<Shared>, query: Result<Query<Params>, QueryRejection>) -> ApiResult {
    let params = params(query)?;
    reject_unknown(&params, &["mode", "include_neutral"])?;
    let include_neutral = match params.get("include_neutral") {
        Some(v) => parse_flag("include_neutral", v)?,
        None => false,
    };
    let doc = match params.get("mode").map(String::as_str).unwrap_or("raw") {
        "raw" => {
            if params.contains_key("include_neutral") {
                return Err(ApiError::bad_request(
                    ErrorCode::Param.as_str(),
                    "include_neutral applies to mode=mapped only",
                ));
            }
            let records = raw_anomalies(&session.fused);
            AnomalyDoc {
                schema_version: SCHEMA_VERSION,
                mode: "raw",
                mapping: None,
                include_neutral: None,
                count: records.len(),
                records,
            }
        }
        "mapped" => {
            let records = mapped_anomalies(&session.fused, &session.config.mapping, include_neutral);
            AnomalyDoc {
                schema_version: SCHEMA_VERSION,
                mode: "mapped",
                mapping: Some(session.config.mapping.name()),
                include_neutral: Some(include_neutral),
                count: records.len(),
                records,
            }
        }
        other => {
            return Err(ApiError::bad_request(
                ErrorCode::Param.as_str(),
                format!("mode must be raw or mapped, got '{other}'"),
            ))
        }
    };
    Ok(ok(&doc))
}

async fn query(State(session): State<Shared>, query: Result<Query<Params>, QueryRejection>) -> ApiResult {
    let mut parameters = params(query)?;
    let name = parameters.remove("name").ok_or_else(|| {
        ApiError::bad_request(ErrorCode::Param.as_str(), "missing parameter 'name'")
    })?;
    let result = run_query(&session, &QueryRequest { name, parameters })?;
    Ok(ok(&result))
}

async fn not_found() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        code: "E_NOT_FOUND",
        message: "no such route".into(),
    }
}

async fn method_not_allowed() -> ApiError {
    ApiError {
        status: StatusCode::METHOD_NOT_ALLOWED,
        code: "E_METHOD",
        message: "the service is read-only; use GET".into(),
    }
}

pub fn router(session: SessionDataset) -> Router {
    Router::new()
        .route("/api/session", get(session_info))
        .route("/api/records", get(records))
        .route("/api/timeline", get(timeline))
        .route("/api/anomalies", get(anomalies))
        .route("/api/query", get(query))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(Arc::new(session))
}

pub async fn serve(session: SessionDataset, addr: SocketAddr) -> emofuse_core::Result<()> {
    let io = |e: std::io::Error| Error::new(ErrorCode::Io, format!("{addr}: {e}"));
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(io)?;
    axum::serve(listener, router(session)).await.map_err(io)
}
