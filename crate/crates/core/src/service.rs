//! HTTP/REST API spoken by the browser extension and by operators.
//!
//! | method | path                       | purpose                              |
//! |--------|----------------------------|--------------------------------------|
//! | POST   | `/api/v1/annotations`      | ingest one submission                |
//! | GET    | `/api/v1/categories`       | category config for the UI           |
//! | POST   | `/api/v1/qc/{image_ref}`   | record a QC verdict                  |
//! | GET    | `/api/v1/snapshot`         | COCO export (`?approved_only=`)      |
//! | GET    | `/api/v1/stats`            | dataset + annotator statistics       |
//! | GET    | `/api/v1/health`           | liveness and replay status           |
//!
//! Every body is canonical JSON. When a token is configured, all endpoints
//! except health require `Authorization: Bearer <token>`.

use std::collections::BTreeMap;
use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, Request, State as AxumState};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::TcpListener;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::canonical;
use crate::categories::CategorySet;
use crate::config::{ConfigError, ServerConfig};
use crate::geometry::{validate_polygon, Point, Polygon};
use crate::png_io;
use crate::snapshot;
use crate::stats;
use crate::storage::{AnnotationDraft, QcEvent, StorageError, Store, SubmissionRecord, Verdict};
use crate::timestamp::Timestamp;
use crate::url_metadata::UrlRegistry;
use crate::violation::{Violation, ViolationCode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Viewport {
    pub width: f64,
    pub height: f64,
    pub device_pixel_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadAnnotation {
    pub category_name: String,
    pub polygon: Vec<Point>,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

/// Body of `POST /api/v1/annotations`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionPayload {
    pub annotator_id: String,
    pub captured_at: String,
    pub page_url: String,
    pub viewport: Viewport,
    /// Base64 (standard alphabet) PNG of the captured viewport.
    pub image: String,
    pub annotations: Vec<PayloadAnnotation>,
}

impl SubmissionPayload {
    /// Convenience constructor that base64-encodes `png`.
    pub fn new(
        annotator_id: &str,
        captured_at: &str,
        page_url: &str,
        viewport: Viewport,
        png: &[u8],
        annotations: Vec<PayloadAnnotation>,
    ) -> Self {
        Self {
            annotator_id: annotator_id.into(),
            captured_at: captured_at.into(),
            page_url: page_url.into(),
            viewport,
            image: base64::engine::general_purpose::STANDARD.encode(png),
            annotations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestResponse {
    pub submission_id: String,
    pub duplicate: bool,
    pub geo_attached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcRequest {
    pub verdict: Verdict,
    #[serde(default)]
    pub reason: String,
    pub reviewer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcResponse {
    pub image_ref: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("invalid payload: {} violation(s)", .0.len())]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Storage(#[from] StorageError),
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("server error: {0}")]
    Serve(std::io::Error),
}

struct Inner {
    store: Result<Store, String>,
    categories: CategorySet,
    categories_json: Bytes,
    rules: UrlRegistry,
    token: Option<String>,
}

/// Shared service state; clone freely.
#[derive(Clone)]
pub struct Service {
    inner: Arc<Inner>,
    max_payload_bytes: usize,
    allowed_origins: Vec<String>,
}

impl Service {
    pub fn new(store: Store, categories: CategorySet, rules: UrlRegistry) -> Self {
        Self::build(Ok(store), categories, rules)
    }

    /// A service whose store failed to replay: health reports 503 and every
    /// other endpoint refuses with 503.
    pub fn degraded(reason: impl Into<String>, categories: CategorySet, rules: UrlRegistry) -> Self {
        Self::build(Err(reason.into()), categories, rules)
    }

    fn build(store: Result<Store, String>, categories: CategorySet, rules: UrlRegistry) -> Self {
        let categories_json = Bytes::from(categories.to_canonical_json());
        Self {
            inner: Arc::new(Inner { store, categories, categories_json, rules, token: None }),
            max_payload_bytes: crate::config::DEFAULT_PAYLOAD_BYTES,
            allowed_origins: Vec::new(),
        }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        Arc::get_mut(&mut self.inner).expect("configure before cloning").token = token;
        self
    }

    pub fn with_max_payload(mut self, bytes: usize) -> Self {
        self.max_payload_bytes = bytes;
        self
    }

    pub fn with_allowed_origins(mut self, origins: Vec<String>) -> Self {
        self.allowed_origins = origins;
        self
    }

    /// Validates `cfg` and opens its store. A store that fails to replay
    /// because of damaged data yields a degraded service rather than an error,
    /// so callers can decide whether to serve 503s or exit.
    pub fn from_config(cfg: &ServerConfig) -> Result<Self, ServiceError> {
        let (categories, rules) = cfg.validate()?;
        let svc = match Store::open(&cfg.data_dir) {
            Ok((store, report)) => {
                for w in &report.warnings {
                    tracing::warn!("{w}");
                }
                Self::new(store, categories, rules)
            }
            Err(e) if e.is_integrity() => Self::degraded(e.to_string(), categories, rules),
            Err(e) => return Err(e.into()),
        };
        Ok(svc
            .with_token(cfg.token.clone())
            .with_max_payload(cfg.max_payload_bytes)
            .with_allowed_origins(cfg.allowed_origins.clone()))
    }

    pub fn store(&self) -> Option<&Store> {
        self.inner.store.as_ref().ok()
    }

    pub fn degraded_reason(&self) -> Option<&str> {
        self.inner.store.as_ref().err().map(String::as_str)
    }

    pub fn categories(&self) -> &CategorySet {
        &self.inner.categories
    }

    fn cors(&self) -> CorsLayer {
        let origin = if self.allowed_origins.is_empty() {
            AllowOrigin::any()
        } else {
            AllowOrigin::list(self.allowed_origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
        };
        CorsLayer::new()
            .allow_origin(origin)
            .allow_methods([Method::GET, Method::POST, Method::OPTIONS])
            .allow_headers([header::CONTENT_TYPE, header::AUTHORIZATION])
    }

    pub fn router(&self) -> Router {
        let api = Router::new()
            .route("/api/v1/annotations", post(post_annotations))
            .route("/api/v1/categories", get(get_categories))
            .route("/api/v1/qc/{image_ref}", post(post_qc))
            .route("/api/v1/snapshot", get(get_snapshot))
            .route("/api/v1/stats", get(get_stats))
            .route_layer(middleware::from_fn_with_state(self.clone(), require_token));
        Router::new()
            .route("/api/v1/health", get(get_health))
            .merge(api)
            .layer(DefaultBodyLimit::max(self.max_payload_bytes))
            .layer(self.cors())
            .with_state(self.clone())
    }

    /// Validates and stores one submission.
    pub fn ingest(&self, payload: SubmissionPayload) -> Result<IngestResponse, IngestError> {
        let store = self.inner.store.as_ref().map_err(|e| StorageError::Integrity(e.clone()))?;
        let checked = check_payload(&payload, &self.inner.categories)?;
        let image_ref = store.put_blob(&checked.png)?;
        let geo = self.inner.rules.parse_url(&payload.page_url);
        let geo_attached = geo.is_some();
        let rec = SubmissionRecord::new(
            payload.annotator_id,
            checked.captured_at,
            payload.page_url,
            image_ref,
            checked.dimensions,
            payload.viewport.device_pixel_ratio,
            checked.drafts,
            geo,
            Timestamp::now(),
        );
        let submission_id = rec.submission_id.clone();
        let receipt = store.append_submission(rec)?;
        Ok(IngestResponse { submission_id, duplicate: receipt.duplicate, geo_attached })
    }
}

struct CheckedPayload {
    png: Vec<u8>,
    dimensions: (u32, u32),
    captured_at: Timestamp,
    drafts: Vec<AnnotationDraft>,
}

fn check_payload(p: &SubmissionPayload, categories: &CategorySet) -> Result<CheckedPayload, IngestError> {
    let mut violations = Vec::new();
    if p.annotator_id.trim().is_empty() {
        violations.push(Violation::error(ViolationCode::EmptyAnnotatorId, "annotator_id is empty"));
    }
    let captured_at = match p.captured_at.parse::<Timestamp>() {
        Ok(t) => Some(t),
        Err(e) => {
            violations.push(Violation::error(
                ViolationCode::InvalidTimestamp,
                format!("captured_at {:?} is not RFC 3339: {e}", p.captured_at),
            ));
            None
        }
    };
    let vp = &p.viewport;
    let viewport_ok = [vp.width, vp.height, vp.device_pixel_ratio].iter().all(|v| v.is_finite() && *v > 0.0);
    if !viewport_ok {
        violations.push(Violation::error(
            ViolationCode::InvalidViewport,
            format!("viewport {}x{} @ {} needs positive finite values", vp.width, vp.height, vp.device_pixel_ratio),
        ));
    }

    let mut png = None;
    match base64::engine::general_purpose::STANDARD.decode(p.image.as_bytes()) {
        Err(e) => violations.push(Violation::error(ViolationCode::InvalidImage, format!("image is not base64: {e}"))),
        Ok(bytes) => match png_io::png_dimensions(&bytes) {
            Err(e) => violations.push(Violation::error(ViolationCode::InvalidImage, e)),
            Ok(dims) => png = Some((bytes, dims)),
        },
    }
    if let (Some((_, (w, h))), true) = (&png, viewport_ok) {
        let expect_w = vp.width * vp.device_pixel_ratio;
        let expect_h = vp.height * vp.device_pixel_ratio;
        if (f64::from(*w) - expect_w).abs() > 1.0 || (f64::from(*h) - expect_h).abs() > 1.0 {
            violations.push(Violation::error(
                ViolationCode::ImageViewportMismatch,
                format!("image is {w}x{h} but viewport x dpr is {expect_w}x{expect_h}"),
            ));
        }
    }

    if p.annotations.is_empty() {
        violations.push(Violation::error(ViolationCode::NoAnnotations, "submission has no annotations"));
    }
    let mut drafts = Vec::with_capacity(p.annotations.len());
    for (i, a) in p.annotations.iter().enumerate() {
        let at = format!("annotation {i}");
        if !categories.contains(&a.category_name) {
            violations.push(
                Violation::error(ViolationCode::UnknownCategory, format!("category {:?} is not configured", a.category_name))
                    .at(&at),
            );
        }
        let problems: Vec<Violation> = match &png {
            Some((_, (w, h))) => validate_polygon(&a.polygon, f64::from(*w), f64::from(*h)),
            None => validate_polygon(&a.polygon, f64::INFINITY, f64::INFINITY),
        };
        let mut polygon_ok = true;
        for v in problems.into_iter().filter(Violation::is_error) {
            polygon_ok = false;
            violations.push(v.at(&at));
        }
        if polygon_ok {
            if let Ok(polygon) = Polygon::new(a.polygon.clone()) {
                drafts.push(AnnotationDraft {
                    category_name: a.category_name.clone(),
                    polygon,
                    attributes: a.attributes.clone(),
                });
            }
        }
    }

    match (violations.is_empty(), png, captured_at) {
        (true, Some((png, dimensions)), Some(captured_at)) => Ok(CheckedPayload { png, dimensions, captured_at, drafts }),
        _ => Err(IngestError::Invalid(violations)),
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    #[serde(skip_serializing_if = "<[Violation]>::is_empty")]
    violations: &'a [Violation],
}

fn json_bytes(status: StatusCode, body: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))], body).into_response()
}

fn json<T: Serialize>(status: StatusCode, value: &T) -> Response {
    json_bytes(status, canonical::to_vec(value).expect("response serializes"))
}

fn error(status: StatusCode, message: &str, violations: &[Violation]) -> Response {
    json(status, &ErrorBody { error: message, violations })
}

fn unavailable(reason: &str) -> Response {
    error(StatusCode::SERVICE_UNAVAILABLE, &format!("storage unavailable: {reason}"), &[])
}

fn storage_error(e: &StorageError) -> Response {
    match e {
        StorageError::NotFound(_) => error(StatusCode::NOT_FOUND, &e.to_string(), &[]),
        StorageError::InvalidImage(_) | StorageError::InvalidRecord(_) => {
            error(StatusCode::BAD_REQUEST, &e.to_string(), &[])
        }
        _ => {
            tracing::error!(error = %e, "storage failure");
            error(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string(), &[])
        }
    }
}

async fn require_token(AxumState(svc): AxumState<Service>, req: Request, next: Next) -> Response {
    if let Some(expected) = &svc.inner.token {
        let supplied = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if supplied != Some(expected.as_str()) {
            return error(StatusCode::UNAUTHORIZED, "missing or wrong token", &[]);
        }
    }
    next.run(req).await
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.expect("blocking task panicked")
}

async fn post_annotations(AxumState(svc): AxumState<Service>, body: Bytes) -> Response {
    if let Some(reason) = svc.degraded_reason() {
        return unavailable(reason);
    }
    let payload: SubmissionPayload = match serde_json::from_slice(&body) {
        Ok(p) => p,
        Err(e) => {
            let v = Violation::error(ViolationCode::MalformedPayload, e.to_string());
            return error(StatusCode::BAD_REQUEST, "malformed payload", &[v]);
        }
    };
    match blocking(move || svc.ingest(payload)).await {
        Ok(r) => json(if r.duplicate { StatusCode::OK } else { StatusCode::CREATED }, &r),
        Err(IngestError::Invalid(v)) => error(StatusCode::BAD_REQUEST, "invalid payload", &v),
        Err(IngestError::Storage(e)) => storage_error(&e),
    }
}

async fn get_categories(AxumState(svc): AxumState<Service>) -> Response {
    json_bytes(StatusCode::OK, svc.inner.categories_json.to_vec())
}

async fn post_qc(AxumState(svc): AxumState<Service>, Path(image_ref): Path<String>, body: Bytes) -> Response {
    let Some(store) = svc.store() else {
        return unavailable(svc.degraded_reason().unwrap_or_default());
    };
    let req: QcRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, &format!("malformed QC request: {e}"), &[]),
    };
    if !store.state().has_image(&image_ref) {
        return error(StatusCode::NOT_FOUND, &format!("unknown image {image_ref}"), &[]);
    }
    let ev = QcEvent { image_ref: image_ref.clone(), verdict: req.verdict, reason: req.reason, reviewer: req.reviewer, at: Timestamp::now() };
    let svc2 = svc.clone();
    let result = blocking(move || svc2.store().expect("store present").append_qc(ev)).await;
    match result {
        Ok(verdict) => json(StatusCode::OK, &QcResponse { image_ref, verdict }),
        Err(e) => storage_error(&e),
    }
}

#[derive(Debug, Default, Deserialize)]
struct ApprovedOnly {
    approved_only: Option<bool>,
}

async fn get_snapshot(AxumState(svc): AxumState<Service>, Query(q): Query<ApprovedOnly>) -> Response {
    let Some(store) = svc.store() else {
        return unavailable(svc.degraded_reason().unwrap_or_default());
    };
    let state = store.state();
    let approved_only = q.approved_only.unwrap_or(false);
    let result = blocking(move || snapshot::snapshot_json(&state, &svc.inner.categories, approved_only)).await;
    match result {
        Ok(body) => json_bytes(StatusCode::OK, body),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string(), &[]),
    }
}

async fn get_stats(AxumState(svc): AxumState<Service>, Query(q): Query<ApprovedOnly>) -> Response {
    let Some(store) = svc.store() else {
        return unavailable(svc.degraded_reason().unwrap_or_default());
    };
    let state = store.state();
    let approved_only = q.approved_only.unwrap_or(true);
    let report = blocking(move || stats::compute_report(&state, &svc.inner.categories, approved_only)).await;
    json(StatusCode::OK, &report)
}

async fn get_health(AxumState(svc): AxumState<Service>) -> Response {
    let version = crate::VERSION.to_owned();
    match svc.degraded_reason() {
        None => json(StatusCode::OK, &Health { status: "ok".into(), version, error: None }),
        Some(reason) => json(
            StatusCode::SERVICE_UNAVAILABLE,
            &Health { status: "unavailable".into(), version, error: Some(reason.to_owned()) },
        ),
    }
}

/// Binds `cfg.bind` and serves until `shutdown` resolves.
pub async fn serve(cfg: &ServerConfig, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServiceError> {
    let svc = Service::from_config(cfg)?;
    if let Some(reason) = svc.degraded_reason() {
        return Err(StorageError::Integrity(reason.to_owned()).into());
    }
    let addr = cfg.bind_addr()?;
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| ServiceError::Bind { addr: cfg.bind.clone(), source })?;
    let local = listener.local_addr().map_err(ServiceError::Serve)?;
    tracing::info!(%local, data_dir = %cfg.data_dir.display(), "listening");
    axum::serve(listener, svc.router()).with_graceful_shutdown(shutdown).await.map_err(ServiceError::Serve)
}
