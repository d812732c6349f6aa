use std::sync::Arc;
use std::time::Instant;

use axum::body::{Body, Bytes};
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use sds_core::cube::Stage;
use sds_core::hsio::{parse_any, CubeFormat};
use sds_core::preprocess::{
    central_spectrum, encode_png, preprocess_raw, rgb_composite, spatial_resize, spectral_bin, trim_bands, BinSpec,
    CalibrationPair, TrimSpec, BINNED_BANDS, DEFAULT_EPSILON, DEFAULT_FRAME, DEFAULT_RGB_BANDS, RAW_BANDS, TRIMMED_BANDS,
};
use sds_core::Cube;
use serde::{Deserialize, Serialize};
use tokio::sync::RwLock;

use crate::registry::{ModelInfo, Registry, ServedModel};
use crate::report::{render, ReportItem};
use crate::store::{CubeHandle, CubeMeta, CubeStore};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub max_upload_bytes: usize,
    pub cube_capacity: usize,
    pub spill_dir: Option<std::path::PathBuf>,
    /// Frame every upload is brought to.
    pub frame: (usize, usize),
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { max_upload_bytes: 512 << 20, cube_capacity: 64, spill_dir: None, frame: DEFAULT_FRAME }
    }
}

pub struct AppState {
    pub config: ServiceConfig,
    pub cubes: CubeStore,
    pub registry: RwLock<Arc<Registry>>,
    pub manifest_path: Option<std::path::PathBuf>,
}

impl AppState {
    pub fn new(config: ServiceConfig, registry: Registry) -> Arc<AppState> {
        Self::with_manifest(config, registry, None)
    }

    pub fn with_manifest(
        config: ServiceConfig,
        registry: Registry,
        manifest_path: Option<std::path::PathBuf>,
    ) -> Arc<AppState> {
        let cubes = CubeStore::new(config.cube_capacity, config.spill_dir.clone());
        Arc::new(AppState { config, cubes, registry: RwLock::new(Arc::new(registry)), manifest_path })
    }

    async fn model(&self, id: &str) -> Result<Arc<ServedModel>, ApiError> {
        self.registry
            .read()
            .await
            .get(id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_model", format!("no model {id:?}")))
    }

    fn cube(&self, id: &str) -> Result<CubeHandle, ApiError> {
        self.cubes.get(id).ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_cube", format!("no cube {id:?}")))
    }
}

/// JSON error body `{code, message}` carried by every 4xx/5xx response.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
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

    fn parse(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "parse_error", message)
    }

    fn dims(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "dims_incompatible", message)
    }

    fn body_status(status: StatusCode, message: String) -> Self {
        if status == StatusCode::PAYLOAD_TOO_LARGE {
            Self::new(status, "payload_too_large", message)
        } else {
            Self::new(status, "bad_request", message)
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { code: self.code.to_string(), message: self.message };
        (self.status, Json(body)).into_response()
    }
}

fn code_for(status: StatusCode) -> &'static str {
    match status {
        StatusCode::NOT_FOUND => "not_found",
        StatusCode::METHOD_NOT_ALLOWED => "method_not_allowed",
        StatusCode::PAYLOAD_TOO_LARGE => "payload_too_large",
        StatusCode::UNSUPPORTED_MEDIA_TYPE => "unsupported_media_type",
        StatusCode::UNPROCESSABLE_ENTITY => "unprocessable",
        s if s.is_server_error() => "internal",
        _ => "bad_request",
    }
}

/// Rewrites error responses produced outside the handlers (rejections,
/// unmatched methods) into the JSON error shape, and logs one JSON line per
/// request.
async fn json_errors_and_log(req: Request, next: Next) -> Response {
    let method = req.method().to_string();
    let path = req.uri().path().to_string();
    let start = Instant::now();
    let resp = next.run(req).await;
    let status = resp.status();
    let log_line = serde_json::json!({
        "method": method,
        "path": path,
        "status": status.as_u16(),
        "ms": start.elapsed().as_secs_f64() * 1e3,
    });
    log::info!("{log_line}");
    let is_json = resp
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    if !(status.is_client_error() || status.is_server_error()) || is_json {
        return resp;
    }
    let bytes = axum::body::to_bytes(resp.into_body(), 64 << 10).await.unwrap_or_default();
    let text = String::from_utf8_lossy(&bytes).trim().to_string();
    let message = if text.is_empty() { status.canonical_reason().unwrap_or("error").to_string() } else { text };
    ApiError::new(status, code_for(status), message).into_response()
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UploadResponse {
    pub cube_id: String,
    pub filename: String,
    pub format: CubeFormat,
    pub dims: [usize; 3],
    pub original_dims: [usize; 3],
    pub stage: Stage,
}

#[derive(Debug, Deserialize)]
struct UploadQuery {
    filename: Option<String>,
}

struct Upload {
    filename: String,
    cube: Vec<u8>,
    white: Option<Vec<u8>>,
    dark: Option<Vec<u8>>,
}

async fn read_upload(state: &Arc<AppState>, query: UploadQuery, headers: &HeaderMap, req: Request) -> Result<Upload, ApiError> {
    let is_multipart = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let default_name = query.filename.unwrap_or_else(|| "upload".to_string());
    if !is_multipart {
        let body = Bytes::from_request(req, state).await.map_err(|r| ApiError::body_status(r.status(), r.body_text()))?;
        return Ok(Upload { filename: default_name, cube: body.to_vec(), white: None, dark: None });
    }
    let mut mp = Multipart::from_request(req, state).await.map_err(|r| ApiError::body_status(r.status(), r.body_text()))?;
    let mut up = Upload { filename: default_name, cube: Vec::new(), white: None, dark: None };
    while let Some(field) = mp.next_field().await.map_err(|e| ApiError::body_status(e.status(), e.body_text()))? {
        let name = field.name().unwrap_or("").to_string();
        let file_name = field.file_name().map(str::to_string);
        let data = field.bytes().await.map_err(|e| ApiError::body_status(e.status(), e.body_text()))?.to_vec();
        match name.as_str() {
            "file" | "cube" => {
                if let Some(f) = file_name {
                    up.filename = f;
                }
                up.cube = data;
            }
            "white" => up.white = Some(data),
            "dark" => up.dark = Some(data),
            other => return Err(ApiError::bad_request(format!("unexpected form field {other:?}"))),
        }
    }
    Ok(up)
}

fn parse_part(bytes: &[u8], what: &str) -> Result<(CubeFormat, Cube), ApiError> {
    if bytes.is_empty() {
        return Err(ApiError::parse(format!("{what} is empty")));
    }
    parse_any(bytes).map_err(|e| ApiError::parse(format!("{what}: {e}")))
}

/// Brings an upload to the stored form: trimmed 101 bands on the service
/// frame. Frames smaller than the service frame are refused because
/// up-sampling would invent detail.
fn normalize(cube: Cube, white: Option<Cube>, dark: Option<Cube>, frame: (usize, usize)) -> Result<Cube, ApiError> {
    let (rows, cols, bands) = cube.dims();
    if rows < frame.0 || cols < frame.1 {
        return Err(ApiError::dims(format!(
            "{rows}x{cols} frame cannot be resampled to {}x{} without up-sampling",
            frame.0, frame.1
        )));
    }
    let pre = |e: sds_core::preprocess::PreprocessError| ApiError::dims(e.to_string());
    let bin = BinSpec { spatial_target: frame, ..BinSpec::default() };
    let as_raw = |c: Cube| {
        let (r, c_, b) = c.dims();
        let wl = c.wavelengths_nm().map(<[f64]>::to_vec);
        Cube::new(r, c_, b, c.into_data(), wl, Stage::Raw).map_err(|e| ApiError::dims(e.to_string()))
    };
    let trimmed = match (white, dark) {
        (Some(w), Some(d)) => {
            if bands != RAW_BANDS {
                return Err(ApiError::dims(format!("calibration frames need a {RAW_BANDS}-band raw cube, got {bands}")));
            }
            let cal = CalibrationPair::new(as_raw(w)?, as_raw(d)?).map_err(pre)?;
            preprocess_raw(&as_raw(cube)?, &cal, bin, TrimSpec::default(), DEFAULT_EPSILON as f32).map_err(pre)?.cube
        }
        (None, None) => match bands {
            TRIMMED_BANDS => cube.advance_stage(Stage::Trimmed).map_err(|e| ApiError::dims(e.to_string()))?,
            BINNED_BANDS => trim_bands(&cube, TrimSpec::default()).map_err(pre)?,
            RAW_BANDS => {
                trim_bands(&spectral_bin(&cube, bin.spectral_factor).map_err(pre)?, TrimSpec::default()).map_err(pre)?
            }
            _ => {
                return Err(ApiError::dims(format!(
                    "{bands}-band cube is neither {RAW_BANDS} (raw), {BINNED_BANDS} (binned) nor {TRIMMED_BANDS} (trimmed)"
                )))
            }
        },
        _ => return Err(ApiError::bad_request("white and dark references must be supplied together")),
    };
    spatial_resize(&trimmed, frame).map_err(pre)
}

async fn upload_cube(
    State(state): State<Arc<AppState>>,
    Query(query): Query<UploadQuery>,
    headers: HeaderMap,
    req: Request,
) -> Result<(StatusCode, Json<UploadResponse>), ApiError> {
    let up = read_upload(&state, query, &headers, req).await?;
    let (format, cube) = parse_part(&up.cube, "cube")?;
    let white = up.white.as_deref().map(|b| parse_part(b, "white reference").map(|p| p.1)).transpose()?;
    let dark = up.dark.as_deref().map(|b| parse_part(b, "dark reference").map(|p| p.1)).transpose()?;
    let (r, c, b) = cube.dims();
    let frame = state.config.frame;
    let stored = tokio::task::spawn_blocking(move || normalize(cube, white, dark, frame))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let (sr, sc, sb) = stored.dims();
    let meta = CubeMeta {
        cube_id: uuid::Uuid::new_v4().simple().to_string(),
        filename: up.filename,
        format,
        uploaded_at: chrono::Utc::now().to_rfc3339(),
        original_dims: [r, c, b],
        dims: [sr, sc, sb],
        stage: stored.stage(),
    };
    let handle = state.cubes.insert(meta, stored);
    let m = &handle.meta;
    Ok((
        StatusCode::CREATED,
        Json(UploadResponse {
            cube_id: m.cube_id.clone(),
            filename: m.filename.clone(),
            format: m.format,
            dims: m.dims,
            original_dims: m.original_dims,
            stage: m.stage,
        }),
    ))
}

async fn cube_meta(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<CubeMeta>, ApiError> {
    Ok(Json((*state.cube(&id)?.meta).clone()))
}

async fn preview(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let handle = state.cube(&id)?;
    let img = rgb_composite(&handle.cube, DEFAULT_RGB_BANDS)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "dims_incompatible", e.to_string()))?;
    let png = encode_png(&img);
    Ok(([(header::CONTENT_TYPE, HeaderValue::from_static("image/png"))], Body::from(png)).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SpectrumResponse {
    pub cube_id: String,
    pub row: usize,
    pub col: usize,
    pub wavelengths_nm: Vec<f64>,
    pub reflectance: Vec<f64>,
}

fn spectrum_of(handle: &CubeHandle) -> SpectrumResponse {
    let s = central_spectrum(&handle.cube);
    SpectrumResponse {
        cube_id: handle.meta.cube_id.clone(),
        row: s.row,
        col: s.col,
        wavelengths_nm: s.wavelengths_nm.unwrap_or_else(sds_core::preprocess::trimmed_wavelengths),
        reflectance: s.reflectance,
    }
}

async fn spectrum(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SpectrumResponse>, ApiError> {
    Ok(Json(spectrum_of(&state.cube(&id)?)))
}

#[derive(Debug, Deserialize)]
pub struct ClassifyRequest {
    pub cube_id: String,
    pub model_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probabilities {
    pub healthy: f64,
    pub infected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisResult {
    pub cube_id: String,
    pub model_id: String,
    /// `"Healthy"` or `"Infected (SDS)"`.
    pub label: String,
    pub probabilities: Probabilities,
    pub bands: Vec<usize>,
    pub wavelengths_nm: Vec<f64>,
    pub elapsed_ms: f64,
    pub classified_at: String,
}

async fn diagnose(state: &AppState, cube_id: &str, model_id: &str) -> Result<DiagnosisResult, ApiError> {
    let start = Instant::now();
    let model = state.model(model_id).await?;
    let handle = state.cube(cube_id)?;
    let (cube_id, model_id) = (cube_id.to_string(), model_id.to_string());
    tokio::task::spawn_blocking(move || {
        model.verify().map_err(|m| ApiError::new(StatusCode::CONFLICT, "hash_mismatch", m))?;
        let pipeline = &model.pipeline;
        let want = pipeline.frame();
        let (rows, cols, _) = handle.cube.dims();
        if want.0 > rows || want.1 > cols {
            return Err(ApiError::dims(format!(
                "model expects a {}x{} frame, cube is {rows}x{cols}",
                want.0, want.1
            )));
        }
        let resized;
        let cube = if want == (rows, cols) {
            &*handle.cube
        } else {
            resized = spatial_resize(&handle.cube, want).map_err(|e| ApiError::dims(e.to_string()))?;
            &resized
        };
        let verdict = pipeline.classify(cube).map_err(|e| ApiError::dims(e.to_string()))?;
        let [healthy, infected] = verdict.probabilities;
        Ok(DiagnosisResult {
            cube_id,
            model_id,
            label: verdict.label.verdict().to_string(),
            probabilities: Probabilities { healthy, infected },
            bands: pipeline.bands.clone(),
            wavelengths_nm: model.info().wavelengths_nm,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            classified_at: chrono::Utc::now().to_rfc3339(),
        })
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

fn json_body<T: serde::de::DeserializeOwned>(body: Result<Json<T>, axum::extract::rejection::JsonRejection>) -> Result<T, ApiError> {
    body.map(|Json(v)| v).map_err(|r| ApiError::new(r.status(), code_for(r.status()), r.body_text()))
}

async fn classify(
    State(state): State<Arc<AppState>>,
    body: Result<Json<ClassifyRequest>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<DiagnosisResult>, ApiError> {
    let req = json_body(body)?;
    Ok(Json(diagnose(&state, &req.cube_id, &req.model_id).await?))
}

async fn list_models(State(state): State<Arc<AppState>>) -> Json<Vec<ModelInfo>> {
    Json(state.registry.read().await.list())
}

#[derive(Debug, Serialize)]
struct ReloadResponse {
    models: usize,
    skipped: Vec<crate::registry::Skipped>,
}

async fn reload_models(State(state): State<Arc<AppState>>) -> Result<Json<ReloadResponse>, ApiError> {
    let Some(path) = state.manifest_path.clone() else {
        return Err(ApiError::new(StatusCode::CONFLICT, "no_manifest", "server was started without a manifest"));
    };
    let reg = Registry::load(&path)
        .await
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "bad_manifest", e.to_string()))?;
    let out = ReloadResponse { models: reg.len(), skipped: reg.skipped().to_vec() };
    *state.registry.write().await = Arc::new(reg);
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
pub struct ReportRequest {
    pub cube_ids: Vec<String>,
    pub model_id: String,
}

async fn report(
    State(state): State<Arc<AppState>>,
    body: Result<Json<ReportRequest>, axum::extract::rejection::JsonRejection>,
) -> Result<Response, ApiError> {
    let req = json_body(body)?;
    if req.cube_ids.is_empty() {
        return Err(ApiError::bad_request("cube_ids is empty"));
    }
    let model = state.model(&req.model_id).await?;
    // Resolve every id first so an unknown one fails the whole request.
    let handles = req.cube_ids.iter().map(|id| state.cube(id)).collect::<Result<Vec<_>, _>>()?;
    let mut items = Vec::with_capacity(handles.len());
    for h in handles {
        let result = diagnose(&state, &h.meta.cube_id, &req.model_id).await?;
        let s = spectrum_of(&h);
        items.push(ReportItem {
            filename: h.meta.filename.clone(),
            uploaded_at: h.meta.uploaded_at.clone(),
            result,
            wavelengths_nm: s.wavelengths_nm,
            reflectance: s.reflectance,
        });
    }
    let html = render(&items, model.entry.kind.slug(), &chrono::Utc::now().to_rfc3339());
    Ok((
        [
            (header::CONTENT_TYPE, HeaderValue::from_static("text/html; charset=utf-8")),
            (header::CONTENT_DISPOSITION, HeaderValue::from_static("attachment; filename=\"sds-report.html\"")),
        ],
        html,
    )
        .into_response())
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let models = state.registry.read().await.len();
    Json(serde_json::json!({ "status": "ok", "version": sds_core::VERSION, "models": models }))
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.config.max_upload_bytes;
    Router::new()
        .route("/api/health", get(health))
        .route("/api/cubes", post(upload_cube).layer(DefaultBodyLimit::max(limit)))
        .route("/api/cubes/{id}", get(cube_meta))
        .route("/api/cubes/{id}/preview", get(preview))
        .route("/api/cubes/{id}/spectrum", get(spectrum))
        .route("/api/classify", post(classify))
        .route("/api/models", get(list_models))
        .route("/api/models/reload", post(reload_models))
        .route("/api/report", post(report))
        .fallback(not_found)
        .layer(middleware::from_fn(json_errors_and_log))
        .with_state(state)
}
