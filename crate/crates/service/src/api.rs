//! Endpoint handlers. Every success body is the serialized result of the
//! matching index operation; every failure is
//! `{"error":{"code":"...","message":"..."}}`.

use std::sync::Arc;

use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::NaiveDate;
use revhist_core::index::{CountMode, Field, IndexReader, QueryError, QueryKey, TermSelector};
use revhist_core::text::entity_key;
use revhist_core::time::{parse_date, DateRange, Granularity};
use serde::{Deserialize, Serialize};

use crate::Shared;

const MAX_K: usize = 1000;
const MAX_LIMIT: usize = 1000;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: ErrorDetail<'a>,
}

#[derive(Serialize)]
struct ErrorDetail<'a> {
    code: &'a str,
    message: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { error: ErrorDetail { code: self.code, message: &self.message } };
        (self.status, Json(body)).into_response()
    }
}

impl ApiError {
    fn bad(code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, code, message: message.into() }
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::NOT_FOUND, code, message: message.into() }
    }

    fn opening() -> Self {
        ApiError {
            status: StatusCode::SERVICE_UNAVAILABLE,
            code: "index-opening",
            message: "the index is still being opened".into(),
        }
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        ApiError::bad(e.code(), e.to_string())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::bad("bad-parameter", e.body_text())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn reader(state: &Shared) -> Result<IndexReader, ApiError> {
    match state.reader() {
        Ok(Some(r)) => Ok(r),
        Ok(None) => Err(ApiError::opening()),
        Err(message) => Err(ApiError { status: StatusCode::SERVICE_UNAVAILABLE, code: "index-unavailable", message }),
    }
}

fn parse<T: std::str::FromStr>(name: &'static str, value: Option<&str>, default: T) -> Result<T, ApiError>
where
    T::Err: std::fmt::Display,
{
    match value {
        None | Some("") => Ok(default),
        Some(v) => v.parse().map_err(|e: T::Err| ApiError::bad("bad-parameter", format!("{name}: {e}"))),
    }
}

fn field(value: Option<&str>) -> Result<Field, ApiError> {
    match value {
        None | Some("") => Ok(Field::Anchor),
        Some(v) => v.parse().map_err(ApiError::from),
    }
}

fn date(name: &'static str, value: &str) -> Result<NaiveDate, ApiError> {
    parse_date(value).map_err(|e| ApiError::bad("bad-parameter", format!("{name}: {e}")))
}

/// Resolves `from`/`to`, defaulting to the span covered by the index.
/// `allow_empty` admits `from == to` (top-terms).
fn range(state: &Shared, r: &IndexReader, from: Option<&str>, to: Option<&str>, allow_empty: bool) -> Result<DateRange, ApiError> {
    let span = r.stats().date_span();
    let start = match from.filter(|s| !s.is_empty()) {
        Some(s) => date("from", s)?,
        None => span.map(|s| s.start).ok_or_else(|| ApiError::bad("bad-parameter", "from is required on an empty index"))?,
    };
    let end = match to.filter(|s| !s.is_empty()) {
        Some(s) => date("to", s)?,
        None => span.map(|s| s.end).ok_or_else(|| ApiError::bad("bad-parameter", "to is required on an empty index"))?,
    };
    if start > end || (start == end && !allow_empty) {
        return Err(QueryError::BadRange { start, end }.into());
    }
    let range = DateRange::new(start, end);
    if range.days() > state.config.max_range_days {
        return Err(ApiError::bad(
            "range-too-large",
            format!("range spans {} days; the limit is {}", range.days(), state.config.max_range_days),
        ));
    }
    Ok(range)
}

fn key(by: Option<&str>, q: &str, default_entity: bool) -> Result<QueryKey, ApiError> {
    match by.unwrap_or(if default_entity { "entity" } else { "term" }) {
        "term" => Ok(QueryKey::term(q)),
        "entity" => Ok(QueryKey::entity(q)),
        other => Err(ApiError::bad("bad-parameter", format!("by: {other:?} (expected term or entity)"))),
    }
}

fn required<'a>(name: &'static str, v: &'a Option<String>) -> Result<&'a str, ApiError> {
    v.as_deref()
        .filter(|s| !s.trim().is_empty())
        .ok_or_else(|| ApiError::bad("missing-parameter", format!("{name} is required")))
}

#[derive(Serialize)]
pub struct Health {
    pub status: &'static str,
    pub segments: usize,
    pub doc_count: u64,
    pub postings: u64,
    pub min_date: Option<NaiveDate>,
    pub max_date: Option<NaiveDate>,
    /// Default `from`/`to` of range queries: `[min_date, max_date + 1)`.
    pub time_span: Option<DateRange>,
}

pub async fn health(State(state): State<Arc<Shared>>) -> ApiResult<Health> {
    let r = reader(&state)?;
    let s = r.stats();
    Ok(Json(Health {
        status: "ok",
        segments: s.segments,
        doc_count: s.doc_count,
        postings: s.postings,
        min_date: s.min_timestamp.map(|t| t.date()),
        max_date: s.max_timestamp.map(|t| t.date()),
        time_span: s.date_span(),
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimelineParams {
    q: Option<String>,
    by: Option<String>,
    field: Option<String>,
    granularity: Option<String>,
    from: Option<String>,
    to: Option<String>,
    mode: Option<String>,
}

pub async fn timeline(
    State(state): State<Arc<Shared>>,
    params: Result<Query<TimelineParams>, QueryRejection>,
) -> ApiResult<revhist_core::index::TimelineHistogram> {
    let Query(p) = params?;
    let r = reader(&state)?;
    let key = key(p.by.as_deref(), required("q", &p.q)?, false)?;
    let field = field(p.field.as_deref())?;
    let granularity: Granularity = parse("granularity", p.granularity.as_deref(), state.config.default_granularity)?;
    let mode: CountMode = parse("mode", p.mode.as_deref(), CountMode::Count)?;
    let range = range(&state, &r, p.from.as_deref(), p.to.as_deref(), false)?;
    Ok(Json(r.timeline(&key, field, granularity, range, mode)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopTermsParams {
    q: Option<String>,
    by: Option<String>,
    field: Option<String>,
    from: Option<String>,
    to: Option<String>,
    k: Option<String>,
}

pub async fn top_terms(
    State(state): State<Arc<Shared>>,
    params: Result<Query<TopTermsParams>, QueryRejection>,
) -> ApiResult<revhist_core::index::TermRanking> {
    let Query(p) = params?;
    let r = reader(&state)?;
    let q = p.q.as_deref().unwrap_or("");
    let selector = match p.by.as_deref() {
        None if q.trim().is_empty() => TermSelector::All,
        Some("all") => TermSelector::All,
        None | Some("entity") => TermSelector::entity(required("q", &p.q)?),
        Some("term") => TermSelector::term(required("q", &p.q)?),
        Some("prefix") => TermSelector::prefix(q),
        Some(other) => {
            return Err(ApiError::bad("bad-parameter", format!("by: {other:?} (expected entity, term, prefix or all)")))
        }
    };
    let field = field(p.field.as_deref())?;
    let k: usize = parse("k", p.k.as_deref(), 10)?;
    if k > MAX_K {
        return Err(ApiError::bad("bad-parameter", format!("k: at most {MAX_K}")));
    }
    let range = range(&state, &r, p.from.as_deref(), p.to.as_deref(), true)?;
    Ok(Json(r.top_terms(&selector, field, range, k)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CooccurParams {
    a: Option<String>,
    b: Option<String>,
    by: Option<String>,
    field: Option<String>,
    granularity: Option<String>,
    from: Option<String>,
    to: Option<String>,
    mode: Option<String>,
    strict: Option<String>,
}

pub async fn cooccur(
    State(state): State<Arc<Shared>>,
    params: Result<Query<CooccurParams>, QueryRejection>,
) -> ApiResult<revhist_core::index::CoOccurrence> {
    let Query(p) = params?;
    let r = reader(&state)?;
    let a = key(p.by.as_deref(), required("a", &p.a)?, true)?;
    let b = key(p.by.as_deref(), required("b", &p.b)?, true)?;
    let field = field(p.field.as_deref())?;
    let strict: bool = parse("strict", p.strict.as_deref(), false)?;
    if strict {
        for k in [&a, &b] {
            if !r.has_key(k, field) {
                return Err(ApiError::not_found("unknown-entity", format!("{} is not in the index", k.as_str())));
            }
        }
    }
    let granularity: Granularity = parse("granularity", p.granularity.as_deref(), state.config.default_granularity)?;
    let mode: CountMode = parse("mode", p.mode.as_deref(), CountMode::Count)?;
    let range = range(&state, &r, p.from.as_deref(), p.to.as_deref(), false)?;
    Ok(Json(r.co_occurrence(&a, &b, field, granularity, range, mode)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntitySearchParams {
    prefix: Option<String>,
    field: Option<String>,
    limit: Option<String>,
}

#[derive(Serialize)]
pub struct EntitySearch {
    pub prefix: String,
    pub hits: Vec<revhist_core::index::EntityHit>,
}

pub async fn entity_search(
    State(state): State<Arc<Shared>>,
    params: Result<Query<EntitySearchParams>, QueryRejection>,
) -> ApiResult<EntitySearch> {
    let Query(p) = params?;
    let r = reader(&state)?;
    let prefix = p.prefix.unwrap_or_default();
    let field = match p.field.as_deref() {
        None | Some("") | Some("any") => None,
        Some(f) => Some(f.parse::<Field>()?),
    };
    let limit: usize = parse("limit", p.limit.as_deref(), 20)?;
    if limit == 0 || limit > MAX_LIMIT {
        return Err(ApiError::bad("bad-parameter", format!("limit: between 1 and {MAX_LIMIT}")));
    }
    let hits = r.entity_search(&prefix, field, limit);
    Ok(Json(EntitySearch { prefix: entity_key(&prefix), hits }))
}

pub async fn not_found() -> ApiError {
    ApiError::not_found("not-found", "no such endpoint")
}
