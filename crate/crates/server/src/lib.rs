//! HTTP+JSON transport for the bibliographic service.
//!
//! Every response body is an envelope: `{"status":"ok","data":...}` on
//! success, `{"status":"error","code":...,"message":...}` otherwise.
//! Authenticated endpoints take `Authorization: Bearer <token>`. Record
//! submission and taxonomy changes accept an `Idempotency-Key` header.

use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use revbib_core::auth::{ProfileChanges, Registration};
use revbib_core::capability::Functionality;
use revbib_core::domain::{RecordDraft, RecordId, Role, TaxonomyPath};
use revbib_core::evaluation::EvaluationInput;
use revbib_core::service::{Decision, Page, PendingKind, RatingInput, SearchQuery};
use revbib_core::taxonomy::{AreaSeed, SubfieldAction};
use revbib_core::{Bibliography, Error};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

type Svc = Arc<Bibliography>;

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

pub fn status_for(err: &Error) -> StatusCode {
    match err {
        Error::Validation(_) | Error::Config(_) => StatusCode::BAD_REQUEST,
        Error::Conflict(_)
        | Error::State(_)
        | Error::Transition { .. }
        | Error::Referential(_) => StatusCode::CONFLICT,
        Error::NotFound(_) => StatusCode::NOT_FOUND,
        Error::Unauthorized | Error::Authentication => StatusCode::UNAUTHORIZED,
        Error::Forbidden(_) | Error::Policy(_) => StatusCode::FORBIDDEN,
        Error::Capability { .. } => StatusCode::NOT_IMPLEMENTED,
        Error::Retriable(_) => StatusCode::SERVICE_UNAVAILABLE,
        Error::Integrity(_) | Error::Storage(_) | Error::Io(_) | Error::Json(_) => {
            StatusCode::INTERNAL_SERVER_ERROR
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_for(&self.0);
        if status.is_server_error() && status != StatusCode::NOT_IMPLEMENTED {
            tracing::error!(error = %self.0, "request failed");
        }
        let body = json!({
            "status": "error",
            "code": self.0.code(),
            "message": self.0.to_string(),
        });
        (status, Json(body)).into_response()
    }
}

fn ok<T: Serialize>(data: T) -> Response {
    Json(json!({ "status": "ok", "data": data })).into_response()
}

type ApiResult = Result<Response, ApiError>;

fn bearer(headers: &HeaderMap) -> String {
    headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .unwrap_or("")
        .trim()
        .to_string()
}

fn idempotency_key(headers: &HeaderMap) -> Option<String> {
    headers
        .get(IDEMPOTENCY_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
}

/// Runs blocking core work off the async executor.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> revbib_core::Result<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(Error::Integrity(format!("worker failed: {e}"))))?
        .map_err(ApiError)
}

#[derive(Clone, Copy)]
enum Access {
    Public,
    Authenticated,
    Gated(Functionality),
}

/// Unwraps an extractor result. On a rejection the caller's access is
/// checked first, so a bad body never masks a missing token or a
/// disabled functionality.
async fn input<T, R: std::fmt::Display>(
    svc: &Svc,
    token: &str,
    access: Access,
    extracted: Result<T, R>,
) -> Result<T, ApiError> {
    let rejection = match extracted {
        Ok(v) => return Ok(v),
        Err(r) => r.to_string(),
    };
    let f = match access {
        Access::Public => None,
        Access::Authenticated => Some(None),
        Access::Gated(f) => Some(Some(f)),
    };
    if let Some(f) = f {
        let (svc, token) = (svc.clone(), token.to_string());
        blocking(move || svc.authorize(&token, f).map(|_| ())).await?;
    }
    Err(ApiError(Error::Validation(rejection)))
}

pub fn router(svc: Svc) -> Router {
    let api = Router::new()
        .route("/capabilities", get(capabilities))
        .route("/auth/register", post(register))
        .route("/auth/login", post(login))
        .route("/profile", get(profile).patch(update_profile))
        .route("/roles", post(grant_role))
        .route("/search", get(search))
        .route("/metrics", get(metrics))
        .route("/areas", get(list_areas).post(add_area))
        .route("/areas/{area}/taxonomy", get(taxonomy))
        .route("/areas/{area}/fields/{field}/subfields", post(modify_subfield))
        .route("/areas/{area}/records", post(submit_record))
        .route("/areas/{area}/records/{record}", get(get_record))
        .route(
            "/areas/{area}/fields/{field}/subfields/{subfield}/records",
            get(list_by_subfield),
        )
        .route(
            "/areas/{area}/fields/{field}/subfields/{subfield}/bibliometrics",
            get(bibliometrics),
        )
        .route("/areas/{area}/bibliometrics/refresh", post(refresh_bibliometrics))
        .route("/areas/{area}/records/{record}/rating", put(rate).get(score))
        .route("/areas/{area}/recommendations", get(recommendations))
        .route("/areas/{area}/records/{record}/evaluation", put(evaluate))
        .route("/areas/{area}/records/{record}/evaluations", get(evaluation_tally))
        .route("/areas/{area}/records/{record}/decision", post(decide))
        .route("/pending/{kind}", get(pending))
        .with_state(svc);
    Router::new()
        .nest(revbib_core::capability::API_PREFIX, api)
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
}

async fn not_found() -> ApiError {
    ApiError(Error::not_found("no such endpoint"))
}

async fn method_not_allowed() -> Response {
    let body = json!({
        "status": "error",
        "code": "method_not_allowed",
        "message": "method not allowed for this endpoint",
    });
    (StatusCode::METHOD_NOT_ALLOWED, Json(body)).into_response()
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    svc: Svc,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(svc))
        .with_graceful_shutdown(shutdown)
        .await
}

// ---- handlers ----

async fn capabilities(State(svc): State<Svc>) -> Response {
    ok(svc.capabilities())
}

async fn register(
    State(svc): State<Svc>,
    body: Result<Json<Registration>, JsonRejection>,
) -> ApiResult {
    let Json(reg) = input(&svc, "", Access::Public, body).await?;
    let profile = blocking(move || svc.register(reg)).await?;
    Ok(ok(profile))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoginBody {
    username: String,
    password_digest: String,
}

async fn login(State(svc): State<Svc>, body: Result<Json<LoginBody>, JsonRejection>) -> ApiResult {
    let Json(b) = input(&svc, "", Access::Public, body).await?;
    let token = blocking(move || svc.login(&b.username, &b.password_digest)).await?;
    Ok(ok(token))
}

async fn profile(State(svc): State<Svc>, headers: HeaderMap) -> ApiResult {
    let token = bearer(&headers);
    Ok(ok(blocking(move || svc.profile(&token)).await?))
}

async fn update_profile(
    State(svc): State<Svc>,
    headers: HeaderMap,
    body: Result<Json<ProfileChanges>, JsonRejection>,
) -> ApiResult {
    let token = bearer(&headers);
    let Json(changes) = input(&svc, &token, Access::Authenticated, body).await?;
    Ok(ok(blocking(move || svc.update_profile(&token, changes)).await?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GrantBody {
    username: String,
    role: Role,
}

async fn grant_role(
    State(svc): State<Svc>,
    headers: HeaderMap,
    body: Result<Json<GrantBody>, JsonRejection>,
) -> ApiResult {
    let token = bearer(&headers);
    let Json(b) = input(&svc, &token, Access::Authenticated, body).await?;
    Ok(ok(blocking(move || svc.grant_role(&token, &b.username, b.role)).await?))
}

async fn search(
    State(svc): State<Svc>,
    query: Result<Query<SearchQuery>, QueryRejection>,
) -> ApiResult {
    let Query(q) = input(&svc, "", Access::Public, query).await?;
    Ok(ok(blocking(move || svc.search(&q)).await?))
}

async fn metrics(State(svc): State<Svc>, headers: HeaderMap) -> ApiResult {
    let token = bearer(&headers);
    Ok(ok(blocking(move || svc.metrics(&token)).await?))
}

async fn list_areas(State(svc): State<Svc>, headers: HeaderMap) -> ApiResult {
    let token = bearer(&headers);
    Ok(ok(blocking(move || svc.list_areas(&token)).await?))
}

async fn add_area(
    State(svc): State<Svc>,
    headers: HeaderMap,
    body: Result<Json<AreaSeed>, JsonRejection>,
) -> ApiResult {
    let token = bearer(&headers);
    let Json(seed) = input(&svc, &token, Access::Gated(Functionality::A4), body).await?;
    let key = idempotency_key(&headers);
    Ok(ok(blocking(move || svc.add_area(&token, &seed, key.as_deref())).await?))
}

async fn taxonomy(
    State(svc): State<Svc>,
    headers: HeaderMap,
    path: Result<Path<String>, PathRejection>,
) -> ApiResult {
    let token = bearer(&headers);
    let Path(area) = input(&svc, &token, Access::Authenticated, path).await?;
    Ok(ok(blocking(move || svc.taxonomy(&token, &area)).await?))
}

async fn modify_subfield(
    State(svc): State<Svc>,
    headers: HeaderMap,
    path: Result<Path<(String, String)>, PathRejection>,
    body: Result<Json<SubfieldAction>, JsonRejection>,
) -> ApiResult {
    let token = bearer(&headers);
    let f = Access::Gated(Functionality::A3);
    let Path((area, field)) = input(&svc, &token, f, path).await?;
    let Json(action) = input(&svc, &token, f, body).await?;
    let key = idempotency_key(&headers);
    Ok(ok(blocking(move || {
        svc.modify_subfield(&token, &area, &field, &action, key.as_deref())
    })
    .await?))
}

async fn submit_record(
    State(svc): State<Svc>,
    headers: HeaderMap,
    path: Result<Path<String>, PathRejection>,
    body: Result<Json<RecordDraft>, JsonRejection>,
) -> ApiResult {
    let token = bearer(&headers);
    let f = Access::Gated(Functionality::U1);
    let Path(area) = input(&svc, &token, f, path).await?;
    let Json(draft) = input(&svc, &token, f, body).await?;
    let key = idempotency_key(&headers);
    Ok(ok(blocking(move || svc.submit_record(&token, &area, &draft, key.as_deref())).await?))
}

async fn get_record(
    State(svc): State<Svc>,
    headers: HeaderMap,
    path: Result<Path<(String, RecordId)>, PathRejection>,
) -> ApiResult {
    let token = bearer(&headers);
    let Path((area, id)) = input(&svc, &token, Access::Authenticated, path).await?;
    Ok(ok(blocking(move || svc.get_record(&token, &area, id)).await?))
}

#[derive(Debug, Deserialize)]
struct PageParams {
    page: Option<u32>,
    page_size: Option<u32>,
}

async fn list_by_subfield(
    State(svc): State<Svc>,
    headers: HeaderMap,
    path: Result<Path<(String, String, String)>, PathRejection>,
    query: Result<Query<PageParams>, QueryRejection>,
) -> ApiResult {
    let token = bearer(&headers);
    let f = Access::Gated(Functionality::U2);
    let Path((area, field, sub)) = input(&svc, &token, f, path).await?;
    let Query(p) = input(&svc, &token, f, query).await?;
    let mut page = Page::default();
    page.page = p.page.unwrap_or(page.page);
    page.page_size = p.page_size.unwrap_or(page.page_size);
    Ok(ok(blocking(move || {
        svc.list_by_subfield(&token, &area, &TaxonomyPath::new(field, sub), page)
    })
    .await?))
}

async fn bibliometrics(
    State(svc): State<Svc>,
    headers: HeaderMap,
    path: Result<Path<(String, String, String)>, PathRejection>,
) -> ApiResult {
    let token = bearer(&headers);
    let Path((area, field, sub)) = input(&svc, &token, Access::Gated(Functionality::U3), path).await?;
    Ok(ok(blocking(move || {
        svc.bibliometrics(&token, &area, &TaxonomyPath::new(field, sub))
    })
    .await?))
}

async fn refresh_bibliometrics(
    State(svc): State<Svc>,
    headers: HeaderMap,
    path: Result<Path<String>, PathRejection>,
) -> ApiResult {
    let token = bearer(&headers);
    let Path(area) = input(&svc, &token, Access::Gated(Functionality::U3), path).await?;
    let written = blocking(move || svc.refresh_bibliometrics(&token, &area)).await?;
    Ok(ok(json!({ "summaries_written": written })))
}

async fn rate(
    State(svc): State<Svc>,
    headers: HeaderMap,
    path: Result<Path<(String, RecordId)>, PathRejection>,
    body: Result<Json<RatingInput>, JsonRejection>,
) -> ApiResult {
    let token = bearer(&headers);
    let f = Access::Gated(Functionality::U4);
    let Path((area, id)) = input(&svc, &token, f, path).await?;
    let Json(r) = input(&svc, &token, f, body).await?;
    Ok(ok(blocking(move || svc.rate(&token, &area, id, r)).await?))
}

async fn score(
    State(svc): State<Svc>,
    headers: HeaderMap,
    path: Result<Path<(String, RecordId)>, PathRejection>,
) -> ApiResult {
    let token = bearer(&headers);
    let Path((area, id)) = input(&svc, &token, Access::Gated(Functionality::U4), path).await?;
    Ok(ok(blocking(move || svc.score(&token, &area, id)).await?))
}

#[derive(Debug, Deserialize)]
struct RecommendParams {
    n: Option<usize>,
}

async fn recommendations(
    State(svc): State<Svc>,
    headers: HeaderMap,
    path: Result<Path<String>, PathRejection>,
    query: Result<Query<RecommendParams>, QueryRejection>,
) -> ApiResult {
    let token = bearer(&headers);
    let f = Access::Gated(Functionality::U5);
    let Path(area) = input(&svc, &token, f, path).await?;
    let Query(q) = input(&svc, &token, f, query).await?;
    let n = q.n.unwrap_or(10);
    Ok(ok(blocking(move || svc.recommend(&token, &area, n)).await?))
}

async fn evaluate(
    State(svc): State<Svc>,
    headers: HeaderMap,
    path: Result<Path<(String, RecordId)>, PathRejection>,
    body: Result<Json<EvaluationInput>, JsonRejection>,
) -> ApiResult {
    let token = bearer(&headers);
    let f = Access::Gated(Functionality::U6);
    let Path((area, id)) = input(&svc, &token, f, path).await?;
    let Json(e) = input(&svc, &token, f, body).await?;
    Ok(ok(blocking(move || svc.submit_evaluation(&token, &area, id, &e)).await?))
}

async fn evaluation_tally(
    State(svc): State<Svc>,
    headers: HeaderMap,
    path: Result<Path<(String, RecordId)>, PathRejection>,
) -> ApiResult {
    let token = bearer(&headers);
    let Path((area, id)) = input(&svc, &token, Access::Gated(Functionality::A1), path).await?;
    Ok(ok(blocking(move || svc.evaluation_tally(&token, &area, id)).await?))
}

async fn decide(
    State(svc): State<Svc>,
    headers: HeaderMap,
    path: Result<Path<(String, RecordId)>, PathRejection>,
    body: Result<Json<Decision>, JsonRejection>,
) -> ApiResult {
    let token = bearer(&headers);
    let f = Access::Gated(Functionality::A2);
    let Path((area, id)) = input(&svc, &token, f, path).await?;
    let Json(d) = input(&svc, &token, f, body).await?;
    Ok(ok(blocking(move || svc.moderator_decide(&token, &area, id, &d)).await?))
}

#[derive(Debug, Deserialize)]
struct PendingParams {
    area: Option<String>,
}

fn parse_kind(kind: &str) -> Result<PendingKind, Error> {
    serde_json::from_value(serde_json::Value::String(kind.to_string()))
        .map_err(|_| Error::not_found(format!("no pending list {kind:?}")))
}

async fn pending(
    State(svc): State<Svc>,
    headers: HeaderMap,
    path: Result<Path<String>, PathRejection>,
    query: Result<Query<PendingParams>, QueryRejection>,
) -> ApiResult {
    let token = bearer(&headers);
    let Path(kind) = input(&svc, &token, Access::Authenticated, path).await?;
    let kind = match parse_kind(&kind) {
        Ok(k) => k,
        Err(e) => {
            let svc = svc.clone();
            blocking(move || svc.authenticate(&token).map(|_| ())).await?;
            return Err(ApiError(e));
        }
    };
    let f = Access::Gated(match kind {
        PendingKind::Moderation => Functionality::A1,
        PendingKind::Evaluation => Functionality::U6,
    });
    let Query(q) = input(&svc, &token, f, query).await?;
    Ok(ok(blocking(move || svc.list_pending(&token, kind, q.area.as_deref())).await?))
}

/// Parses an envelope's `data` field, or returns the error envelope's code
/// and message. Shared by clients of this API.
pub fn decode_envelope<T: DeserializeOwned>(
    body: &serde_json::Value,
) -> Result<T, (String, String)> {
    match body.get("status").and_then(|s| s.as_str()) {
        Some("ok") => serde_json::from_value(body.get("data").cloned().unwrap_or_default())
            .map_err(|e| ("decode".to_string(), e.to_string())),
        _ => Err((
            body.get("code")
                .and_then(|c| c.as_str())
                .unwrap_or("unknown")
                .to_string(),
            body.get("message")
                .and_then(|m| m.as_str())
                .unwrap_or("")
                .to_string(),
        )),
    }
}
