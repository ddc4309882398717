//! REST routes. Every handler authenticates with a bearer token, runs the
//! blocking aggregate call on the blocking pool and answers JSON. Errors are
//! `{code, message}` objects.

use crate::app::App;
use axum::body::Bytes;
use axum::extract::{FromRequest, FromRequestParts, Multipart, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use presenzia_core::attendance::{AttendanceError, FrameResult};
use presenzia_core::detection::DetectionError;
use presenzia_core::directory::{DirectoryError, EmployeeId, EmployeePatch, EmployeeRecord, EmployeeRole, Principal, Role};
use presenzia_core::embedding::EmbeddingError;
use presenzia_core::imaging::{decode_frame, ImageDecodeError, RgbImage, MAX_FRAME_BYTES};
use presenzia_core::pipeline::PipelineError;
use presenzia_core::time::Timestamp;
use presenzia_core::tracking::{ArchiveFilter, CheckOutcome, SessionId, TrackingError};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Largest accepted enrollment request (several encoded images).
pub const MAX_ENROLL_BYTES: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "permission_denied", message)
    }

    fn too_large(limit: usize) -> Self {
        Self::new(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", format!("request body exceeds {limit} bytes"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = self.code, "{}", self.message);
        }
        (self.status, Json(ErrorBody { code: self.code.into(), message: self.message })).into_response()
    }
}

impl From<AttendanceError> for ApiError {
    fn from(e: AttendanceError) -> Self {
        use StatusCode as S;
        let msg = e.to_string();
        let (status, code) = match &e {
            AttendanceError::Directory(d) => match d {
                DirectoryError::PermissionDenied(_) => (S::FORBIDDEN, "permission_denied"),
                DirectoryError::AlreadyExists(_) => (S::CONFLICT, "already_exists"),
                DirectoryError::NotFound(_) => (S::NOT_FOUND, "not_found"),
                DirectoryError::Validation(_) | DirectoryError::Csv { .. } => (S::BAD_REQUEST, "validation_error"),
                DirectoryError::EnrollmentFailed(_) => (S::BAD_REQUEST, "enrollment_failed"),
            },
            AttendanceError::Tracking(t) => match t {
                TrackingError::EmployeeNotFound(_) | TrackingError::SessionNotFound(_) => (S::NOT_FOUND, "not_found"),
                TrackingError::SessionExists(_) => (S::CONFLICT, "session_exists"),
                TrackingError::SessionNotActive(_) => (S::CONFLICT, "session_not_active"),
                TrackingError::InvalidSpan(_) | TrackingError::InvalidConfig(_) => (S::BAD_REQUEST, "validation_error"),
                TrackingError::PermissionDenied(_) => (S::FORBIDDEN, "permission_denied"),
            },
            AttendanceError::Pipeline(PipelineError::Detection(DetectionError::BackendUnavailable(_)))
            | AttendanceError::Pipeline(PipelineError::Embedding(EmbeddingError::BackendUnavailable(_))) => {
                (S::SERVICE_UNAVAILABLE, "backend_unavailable")
            }
            AttendanceError::Pipeline(PipelineError::Detection(DetectionError::InvalidImage(_))) => {
                (S::BAD_REQUEST, "invalid_image")
            }
            AttendanceError::Pipeline(_) => (S::INTERNAL_SERVER_ERROR, "pipeline_error"),
            AttendanceError::Gallery(_) => (S::INTERNAL_SERVER_ERROR, "gallery_error"),
            AttendanceError::Journal(_) => (S::INTERNAL_SERVER_ERROR, "storage_error"),
        };
        ApiError::new(status, code, msg)
    }
}

impl From<ImageDecodeError> for ApiError {
    fn from(e: ImageDecodeError) -> Self {
        match e {
            ImageDecodeError::TooLarge(_) => ApiError::too_large(MAX_FRAME_BYTES),
            other => ApiError::new(StatusCode::BAD_REQUEST, "invalid_image", other.to_string()),
        }
    }
}

impl From<crate::store::StoreError> for ApiError {
    fn from(e: crate::store::StoreError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_error", e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;
pub type AppState = Arc<App>;

/// The authenticated caller.
pub struct Caller(pub Principal);

impl FromRequestParts<AppState> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, app: &AppState) -> Result<Self, Self::Rejection> {
        let unauthorized = |m: &str| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", m);
        let value = parts
            .headers
            .get(header::AUTHORIZATION)
            .ok_or_else(|| unauthorized("missing bearer token"))?
            .to_str()
            .map_err(|_| unauthorized("malformed authorization header"))?;
        let token = value
            .strip_prefix("Bearer ")
            .or_else(|| value.strip_prefix("bearer "))
            .ok_or_else(|| unauthorized("expected a bearer token"))?;
        app.authenticate(token.trim()).map(Caller).ok_or_else(|| unauthorized("unknown token"))
    }
}

/// JSON body whose rejections use the API error shape.
pub struct ApiJson<T>(pub T);

impl<T: serde::de::DeserializeOwned, S: Send + Sync> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(ApiJson(v)),
            Err(rej) if rej.status() == StatusCode::PAYLOAD_TOO_LARGE => Err(ApiError::too_large(MAX_ENROLL_BYTES)),
            Err(rej) => Err(ApiError::bad_request(rej.body_text())),
        }
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

fn decode_images(encoded: &[String]) -> ApiResult<Vec<RgbImage>> {
    encoded
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(s.trim())
                .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_image", format!("image {i}: {e}")))?;
            decode_frame(&bytes).map_err(|e| match e {
                ImageDecodeError::TooLarge(_) => ApiError::too_large(MAX_FRAME_BYTES),
                other => ApiError::new(StatusCode::BAD_REQUEST, "invalid_image", format!("image {i}: {other}")),
            })
        })
        .collect()
}

// Health and tokens.

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
}

async fn healthz() -> Json<Health> {
    Json(Health { status: "ok".into() })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenRequest {
    pub principal_id: String,
    pub role: Role,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenResponse {
    pub token: String,
    pub principal_id: String,
    pub role: Role,
}

async fn create_token(
    State(app): State<AppState>,
    Caller(caller): Caller,
    ApiJson(req): ApiJson<TokenRequest>,
) -> ApiResult<(StatusCode, Json<TokenResponse>)> {
    if caller.role != Role::Admin {
        return Err(ApiError::forbidden("only admins issue tokens"));
    }
    blocking(move || {
        if req.principal_id.trim().is_empty() {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "validation_error", "principal_id must not be empty"));
        }
        if req.role == Role::Employee {
            app.attendance.get_employee(&caller, &EmployeeId::new(req.principal_id.clone()))?;
        }
        let principal = Principal::new(req.principal_id.clone(), req.role);
        let token = app.issue_token(&principal)?;
        Ok((StatusCode::CREATED, Json(TokenResponse { token, principal_id: req.principal_id, role: req.role })))
    })
    .await
}

// Employees.

/// New employee with base64-encoded JPEG or PNG enrollment images.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewEmployee {
    pub employee_id: String,
    pub name: String,
    pub contact: String,
    #[serde(default = "default_role")]
    pub role: EmployeeRole,
    pub images: Vec<String>,
}

fn default_role() -> EmployeeRole {
    EmployeeRole::Employee
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EmployeeUpdate {
    #[serde(flatten)]
    pub patch: EmployeePatch,
    /// Replacement enrollment images, base64 encoded.
    pub images: Option<Vec<String>>,
}

/// Enrollment body: JSON with base64 images, or multipart with a `record`
/// JSON part and one file part per image.
async fn read_new_employee(req: Request, app: &AppState) -> ApiResult<(EmployeeRecord, Vec<RgbImage>)> {
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    if !is_multipart {
        let ApiJson(body) = ApiJson::<NewEmployee>::from_request(req, app).await?;
        let images = decode_images(&body.images)?;
        return Ok((EmployeeRecord::new(body.employee_id, body.name, body.contact, body.role), images));
    }
    let mut mp = Multipart::from_request(req, app).await.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let mut record: Option<EmployeeRecord> = None;
    let mut images = Vec::new();
    while let Some(field) = mp.next_field().await.map_err(|e| ApiError::bad_request(e.body_text()))? {
        let name = field.name().unwrap_or_default().to_string();
        let data = field.bytes().await.map_err(|e| ApiError::bad_request(e.body_text()))?;
        if name == "record" {
            let r: NewEmployee = serde_json::from_slice(&data)
                .or_else(|_| {
                    #[derive(Deserialize)]
                    struct Meta {
                        employee_id: String,
                        name: String,
                        contact: String,
                        #[serde(default = "default_role")]
                        role: EmployeeRole,
                    }
                    serde_json::from_slice::<Meta>(&data).map(|m| NewEmployee {
                        employee_id: m.employee_id,
                        name: m.name,
                        contact: m.contact,
                        role: m.role,
                        images: Vec::new(),
                    })
                })
                .map_err(|e| ApiError::bad_request(format!("record part: {e}")))?;
            images.extend(decode_images(&r.images)?);
            record = Some(EmployeeRecord::new(r.employee_id, r.name, r.contact, r.role));
        } else {
            images.push(decode_frame(&data)?);
        }
    }
    let record = record.ok_or_else(|| ApiError::bad_request("multipart body needs a `record` part"))?;
    Ok((record, images))
}

async fn create_employee(
    State(app): State<AppState>,
    Caller(caller): Caller,
    req: Request,
) -> ApiResult<(StatusCode, Json<EmployeeRecord>)> {
    if caller.role != Role::Admin {
        return Err(ApiError::forbidden("admin role required"));
    }
    let (record, images) = read_new_employee(req, &app).await?;
    blocking(move || {
        let rec = app.attendance.add_employee(&caller, record, &images, app.now())?;
        Ok((StatusCode::CREATED, Json(rec)))
    })
    .await
}

async fn list_employees(State(app): State<AppState>, Caller(caller): Caller) -> ApiResult<Json<Vec<EmployeeRecord>>> {
    blocking(move || Ok(Json(app.attendance.list_employees(&caller)?))).await
}

async fn get_employee(
    State(app): State<AppState>,
    Caller(caller): Caller,
    Path(id): Path<String>,
) -> ApiResult<Json<EmployeeRecord>> {
    blocking(move || Ok(Json(app.attendance.get_employee(&caller, &EmployeeId::new(id))?))).await
}

async fn update_employee(
    State(app): State<AppState>,
    Caller(caller): Caller,
    Path(id): Path<String>,
    ApiJson(body): ApiJson<EmployeeUpdate>,
) -> ApiResult<Json<EmployeeRecord>> {
    let images = body.images.as_deref().map(decode_images).transpose()?;
    blocking(move || {
        let rec = app.attendance.update_employee(&caller, &EmployeeId::new(id), &body.patch, images.as_deref(), app.now())?;
        Ok(Json(rec))
    })
    .await
}

async fn delete_employee(
    State(app): State<AppState>,
    Caller(caller): Caller,
    Path(id): Path<String>,
) -> ApiResult<StatusCode> {
    blocking(move || {
        app.attendance.delete_employee(&caller, &EmployeeId::new(id), app.now())?;
        Ok(StatusCode::NO_CONTENT)
    })
    .await
}

// Sessions.

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StartSession {
    /// Defaults to the caller.
    pub employee_id: Option<String>,
    pub planned_duration_secs: Option<u64>,
    pub seed: Option<u64>,
}

async fn start_session(
    State(app): State<AppState>,
    Caller(caller): Caller,
    body: Bytes,
) -> ApiResult<Response> {
    // An empty body starts a default session for the caller.
    let body: StartSession = if body.iter().all(u8::is_ascii_whitespace) {
        StartSession::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?
    };
    blocking(move || {
        let employee = EmployeeId::new(body.employee_id.unwrap_or_else(|| caller.id.clone()));
        let secs = body.planned_duration_secs.unwrap_or(app.config.default_session_secs);
        let ms = i64::try_from(secs.saturating_mul(1000)).unwrap_or(i64::MAX);
        let rec = app.attendance.start_session(&caller, &employee, app.now(), ms, body.seed)?;
        Ok((StatusCode::CREATED, Json(rec)).into_response())
    })
    .await
}

async fn list_sessions(State(app): State<AppState>, Caller(caller): Caller) -> ApiResult<Response> {
    blocking(move || Ok(Json(app.attendance.list_sessions(&caller)?).into_response())).await
}

async fn get_session(State(app): State<AppState>, Caller(caller): Caller, Path(id): Path<String>) -> ApiResult<Response> {
    blocking(move || Ok(Json(app.attendance.get_session(&caller, &SessionId(id))?).into_response())).await
}

async fn end_session(State(app): State<AppState>, Caller(caller): Caller, Path(id): Path<String>) -> ApiResult<Response> {
    blocking(move || Ok(Json(app.attendance.end_session(&caller, &SessionId(id), app.now())?).into_response())).await
}

/// Response to a frame upload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameResponse {
    pub outcome: CheckOutcome,
    pub alert_id: Option<String>,
    #[serde(flatten)]
    pub result: FrameResult,
}

async fn read_frame_bytes(req: Request, app: &AppState) -> ApiResult<Bytes> {
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let too_large = |e: &dyn std::fmt::Display| {
        if e.to_string().contains("length limit") {
            ApiError::too_large(MAX_FRAME_BYTES)
        } else {
            ApiError::bad_request(e.to_string())
        }
    };
    if is_multipart {
        let mut mp = Multipart::from_request(req, app).await.map_err(|e| ApiError::bad_request(e.body_text()))?;
        while let Some(field) = mp.next_field().await.map_err(|e| {
            if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
                ApiError::too_large(MAX_FRAME_BYTES)
            } else {
                ApiError::bad_request(e.body_text())
            }
        })? {
            if field.file_name().is_some() || matches!(field.name(), Some("frame" | "image" | "file")) {
                return field.bytes().await.map_err(|e| {
                    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
                        ApiError::too_large(MAX_FRAME_BYTES)
                    } else {
                        ApiError::bad_request(e.body_text())
                    }
                });
            }
        }
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid_image", "multipart body has no image part"));
    }
    axum::body::to_bytes(req.into_body(), MAX_FRAME_BYTES).await.map_err(|e| too_large(&e))
}

async fn submit_frame(
    State(app): State<AppState>,
    Caller(caller): Caller,
    Path(id): Path<String>,
    req: Request,
) -> ApiResult<Json<FrameResponse>> {
    let bytes = read_frame_bytes(req, &app).await?;
    blocking(move || {
        let image = decode_frame(&bytes)?;
        let result = app.attendance.submit_frame(&caller, &SessionId(id), &image, app.now())?;
        if let Some(a) = &result.recorded.alert {
            app.dispatch(a);
        }
        Ok(Json(FrameResponse {
            outcome: result.recorded.check.outcome,
            alert_id: result.recorded.alert.as_ref().map(|a| a.alert_id.0.clone()),
            result,
        }))
    })
    .await
}

// Alerts and archive.

async fn list_alerts(State(app): State<AppState>, Caller(caller): Caller) -> ApiResult<Response> {
    blocking(move || Ok(Json(app.attendance.list_alerts(&caller)?).into_response())).await
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ArchiveQuery {
    /// `1` or `true`: an employee reading their own records.
    #[serde(rename = "self")]
    pub own: Option<String>,
    pub employee_id: Option<String>,
    pub session_id: Option<String>,
    /// Inclusive lower bound, epoch milliseconds.
    pub from: Option<i64>,
    /// Exclusive upper bound, epoch milliseconds.
    pub to: Option<i64>,
}

async fn query_archive(
    State(app): State<AppState>,
    Caller(caller): Caller,
    Query(q): Query<ArchiveQuery>,
) -> ApiResult<Response> {
    let own = matches!(q.own.as_deref(), Some("1" | "true"));
    match caller.role {
        Role::Admin => return Err(ApiError::forbidden("admins may not read the archive")),
        Role::Employee if !own => return Err(ApiError::forbidden("employees read their own records with ?self=1")),
        _ => {}
    }
    let filter = ArchiveFilter {
        employee_id: q.employee_id.map(EmployeeId::new),
        session_id: q.session_id.map(SessionId),
        from: q.from.map(Timestamp),
        to: q.to.map(Timestamp),
    };
    blocking(move || Ok(Json(app.attendance.query_archive(&caller, &filter)?).into_response())).await
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn router(app: AppState) -> Router {
    let frames = post(submit_frame).layer(axum::extract::DefaultBodyLimit::max(MAX_FRAME_BYTES + 64 * 1024));
    let mut r = Router::new()
        .route("/healthz", get(healthz))
        .route("/tokens", post(create_token))
        .route("/employees", post(create_employee).get(list_employees))
        .route("/employees/{id}", get(get_employee).put(update_employee).delete(delete_employee))
        .route("/sessions", post(start_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/frames", frames)
        .route("/sessions/{id}/end", post(end_session))
        .route("/alerts", get(list_alerts))
        .route("/archive", get(query_archive))
        .fallback(fallback)
        .layer(axum::extract::DefaultBodyLimit::max(MAX_ENROLL_BYTES));
    if let Some(dir) = &app.config.ui_dir {
        r = r.nest_service("/ui", tower_http::services::ServeDir::new(dir));
    }
    r.with_state(app)
}
