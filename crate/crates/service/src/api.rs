//! HTTP/JSON API.
//!
//! | method | path | response |
//! |--------|------|----------|
//! | GET | `/materials` | list of [`MaterialInfo`] |
//! | GET | `/materials/{name}` | `{ name, variants: [MaterialInfo] }` |
//! | POST | `/jobs/preview` | `{material, type, k?, seed?}` → 202 `{job_id}` |
//! | GET | `/jobs/{id}` | [`JobState`] |
//! | GET | `/jobs/{id}/image` | PNG once the job is done |
//! | GET | `/bench/latest` | `{times, storage, aggregates}` |
//! | GET | `/bench/latest/{file}` | one chart CSV |
//!
//! Errors are `{"error": {"kind", "message"}}`. A preview request is rejected
//! with 400 when it carries any K for a homogeneous material or a K outside
//! {1, 5, 10}, 404 when the material variant is unknown, and 409 with the
//! existing `job_id` while an identical (material, type, K) job is pending.

use crate::config::ServiceConfig;
use crate::jobs::{JobState, JobStatus, JobStore, JobStoreError, IMAGE_FILE, PFM_FILE, REPORT_FILE};
use crate::preview::{preview_seed, run_preview};
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gensss_core::bench::{read_chart_data, AGGREGATES_CSV, STORAGE_CSV, TIMES_CSV};
use gensss_core::material::{check_k_rule, MaterialType, ALLOWED_K};
use gensss_core::pipeline::{MaterialEntry, MaterialLibrary, MaterialSource};
use gensss_core::render::image_io::{encode_pfm, encode_png};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::sync::{Arc, Mutex};
use tokio::sync::mpsc;

pub struct AppState {
    pub config: ServiceConfig,
    pub library: MaterialLibrary,
    pub jobs: Mutex<JobStore>,
    queue: mpsc::UnboundedSender<String>,
}

impl AppState {
    /// Scans materials, opens the job store and spawns the worker pool on
    /// the current tokio runtime.
    pub fn start(config: ServiceConfig) -> anyhow::Result<Arc<AppState>> {
        let library = MaterialLibrary::scan(&config.material_dir)?;
        for (path, why) in &library.rejected {
            tracing::warn!(path = %path.display(), %why, "skipping unreadable material");
        }
        let jobs = JobStore::open(config.jobs_dir())?;
        let (tx, rx) = mpsc::unbounded_channel();
        let workers = config.workers;
        let state = Arc::new(AppState { config, library, jobs: Mutex::new(jobs), queue: tx });
        let rx = Arc::new(tokio::sync::Mutex::new(rx));
        for _ in 0..workers {
            tokio::spawn(worker(state.clone(), rx.clone()));
        }
        Ok(state)
    }

    fn jobs(&self) -> std::sync::MutexGuard<'_, JobStore> {
        self.jobs.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/materials", get(list_materials))
        .route("/materials/{name}", get(material_detail))
        .route("/jobs/preview", post(submit_preview))
        .route("/jobs/{id}", get(job_state))
        .route("/jobs/{id}/image", get(job_image))
        .route("/bench/latest", get(bench_latest))
        .route("/bench/latest/{file}", get(bench_file))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
    extra: Option<Value>,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self { status, kind, message: message.into(), extra: None }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl From<JobStoreError> for ApiError {
    fn from(e: JobStoreError) -> Self {
        ApiError::internal(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": { "kind": self.kind, "message": self.message } });
        if let Some(Value::Object(extra)) = self.extra {
            body.as_object_mut().expect("object").extend(extra);
        }
        (self.status, Json(body)).into_response()
    }
}

/// What the panel needs to render a material choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialInfo {
    pub name: String,
    #[serde(rename = "type")]
    pub material_type: MaterialType,
    /// Whether the user picks K; false means K is fixed at 1.
    pub applicable: bool,
    pub allowed_k: Vec<usize>,
    pub default_k: usize,
    /// `factored` for measured archives, `dipole` for analytic materials.
    pub model: String,
}

impl MaterialInfo {
    pub fn from_entry(e: &MaterialEntry) -> Self {
        let d = &e.descriptor;
        let applicable = d.k_applicable();
        Self {
            name: d.name.clone(),
            material_type: d.material_type,
            applicable,
            allowed_k: if applicable { ALLOWED_K.to_vec() } else { vec![1] },
            default_k: d.k_parameter,
            model: match e.source {
                MaterialSource::Archive(_) => "factored",
                MaterialSource::Dipole(_) => "dipole",
            }
            .into(),
        }
    }
}

async fn list_materials(State(state): State<Arc<AppState>>) -> Json<Vec<MaterialInfo>> {
    Json(state.library.entries().iter().map(MaterialInfo::from_entry).collect())
}

async fn material_detail(State(state): State<Arc<AppState>>, UrlPath(name): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    let variants: Vec<MaterialInfo> = state.library.by_name(&name).into_iter().map(MaterialInfo::from_entry).collect();
    if variants.is_empty() {
        return Err(ApiError::not_found(format!("unknown material `{name}`")));
    }
    Ok(Json(json!({ "name": name, "variants": variants })))
}

/// A validated preview request; `k` is `None` when the client omitted it.
#[derive(Debug, Clone, PartialEq)]
pub struct PreviewRequest {
    pub material: String,
    pub material_type: MaterialType,
    pub k: Option<usize>,
    pub seed: Option<u64>,
}

/// Parses and checks a request body against the K rules. Anything other
/// than a well-formed request is a 400.
pub fn parse_preview_request(body: &[u8]) -> Result<PreviewRequest, ApiError> {
    let value: Value = serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON: {e}")))?;
    let obj = value.as_object().ok_or_else(|| ApiError::bad_request("request body must be a JSON object"))?;
    if let Some(unknown) = obj.keys().find(|k| !matches!(k.as_str(), "material" | "type" | "k" | "seed")) {
        return Err(ApiError::bad_request(format!("unknown field `{unknown}`")));
    }
    let material = match obj.get("material") {
        Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
        _ => return Err(ApiError::bad_request("`material` must be a non-empty string")),
    };
    let material_type: MaterialType = match obj.get("type") {
        Some(Value::String(s)) => s.parse().map_err(ApiError::bad_request)?,
        _ => return Err(ApiError::bad_request("`type` must be \"Homogeneous\" or \"Heterogeneous\"")),
    };
    let k = match obj.get("k") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_u64()
                .and_then(|k| usize::try_from(k).ok())
                .ok_or_else(|| ApiError::bad_request("`k` must be one of 1, 5 or 10"))?,
        ),
    };
    let seed = match obj.get("seed") {
        None | Some(Value::Null) => None,
        Some(v) => Some(v.as_u64().ok_or_else(|| ApiError::bad_request("`seed` must be a nonnegative integer"))?),
    };
    match (material_type, k) {
        (MaterialType::Homogeneous, Some(k)) => {
            return Err(ApiError::bad_request(format!("K is not selectable for homogeneous materials (got {k})")))
        }
        (MaterialType::Heterogeneous, Some(k)) => check_k_rule(material_type, k).map_err(|e| ApiError::bad_request(e.to_string()))?,
        _ => {}
    }
    Ok(PreviewRequest { material, material_type, k, seed })
}

async fn submit_preview(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req = parse_preview_request(&body)?;
    let entry = state
        .library
        .find(&req.material, req.material_type)
        .ok_or_else(|| ApiError::not_found(format!("no {} material named `{}`", req.material_type, req.material)))?;
    let k = match req.material_type {
        MaterialType::Homogeneous => 1,
        MaterialType::Heterogeneous => req.k.unwrap_or(entry.descriptor.k_parameter),
    };
    check_k_rule(req.material_type, k).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let seed = req.seed.unwrap_or_else(|| preview_seed(&req.material, req.material_type, k));

    let job = {
        let mut jobs = state.jobs();
        if let Some(existing) = jobs.active_for(&req.material, req.material_type, k) {
            let mut e = ApiError::new(StatusCode::CONFLICT, "duplicate_job", "an identical preview is already pending");
            e.extra = Some(json!({ "job_id": existing.id }));
            return Err(e);
        }
        jobs.create(&req.material, req.material_type, k, seed)?
    };
    state.queue.send(job.id.clone()).map_err(ApiError::internal)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job.id, "status": job.status }))).into_response())
}

async fn job_state(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<JobState>, ApiError> {
    state.jobs().get(&id).cloned().map(Json).ok_or_else(|| ApiError::not_found(format!("unknown job `{id}`")))
}

async fn job_image(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let (status, path) = {
        let jobs = state.jobs();
        let job = jobs.get(&id).ok_or_else(|| ApiError::not_found(format!("unknown job `{id}`")))?;
        (job.status, jobs.job_dir(&id).join(IMAGE_FILE))
    };
    if status != JobStatus::Done {
        return Err(ApiError::new(StatusCode::CONFLICT, "not_ready", format!("job is {status:?}")));
    }
    let bytes = tokio::fs::read(&path).await.map_err(ApiError::internal)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

async fn bench_latest(State(state): State<Arc<AppState>>) -> Result<Json<Value>, ApiError> {
    let dir = state.config.bench_dir();
    let data = read_chart_data(&dir).map_err(|e| ApiError::not_found(format!("no benchmark results: {e}")))?;
    Ok(Json(json!({ "times": data.times, "storage": data.storage, "aggregates": data.aggregates })))
}

async fn bench_file(State(state): State<Arc<AppState>>, UrlPath(file): UrlPath<String>) -> Result<Response, ApiError> {
    if ![TIMES_CSV, STORAGE_CSV, AGGREGATES_CSV].contains(&file.as_str()) {
        return Err(ApiError::not_found(format!("unknown chart file `{file}`")));
    }
    let path = state.config.bench_dir().join(&file);
    let text = tokio::fs::read_to_string(&path).await.map_err(|_| ApiError::not_found("no benchmark results"))?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], text).into_response())
}

async fn worker(state: Arc<AppState>, rx: Arc<tokio::sync::Mutex<mpsc::UnboundedReceiver<String>>>) {
    loop {
        let Some(id) = rx.lock().await.recv().await else { return };
        let st = state.clone();
        let outcome = tokio::task::spawn_blocking(move || execute(&st, &id)).await;
        if let Err(e) = outcome {
            tracing::error!(error = %e, "preview worker panicked");
        }
    }
}

/// Runs one job to completion, recording the outcome in the store.
fn execute(state: &AppState, id: &str) {
    let job = match state.jobs().update(id, |j| j.status = JobStatus::Running) {
        Ok(j) => j,
        Err(e) => {
            tracing::error!(job = id, error = %e, "cannot start job");
            return;
        }
    };
    let result = (|| -> anyhow::Result<()> {
        let entry = state
            .library
            .find(&job.material, job.material_type)
            .ok_or_else(|| anyhow::anyhow!("material `{}` disappeared", job.material))?;
        // Compression takes the first tenth of the bar, rendering the rest.
        let progress = |f: f64| state.jobs().set_progress(id, 0.1 + 0.9 * f);
        let out = run_preview(entry, job.k, job.seed, &state.config, Some(&progress))?;
        let dir = state.jobs().job_dir(id);
        std::fs::write(dir.join(IMAGE_FILE), encode_png(&out.report.image)?)?;
        std::fs::write(dir.join(PFM_FILE), encode_pfm(&out.report.image)?)?;
        std::fs::write(dir.join(REPORT_FILE), serde_json::to_vec_pretty(&out.report)?)?;
        state.jobs().update(id, |j| {
            j.status = JobStatus::Done;
            j.progress = 1.0;
            j.result = Some(out.report.clone());
            j.fitness = out.fitness;
            j.storage_bytes = Some(out.storage_bytes);
        })?;
        Ok(())
    })();
    if let Err(e) = result {
        tracing::warn!(job = id, error = %e, "preview job failed");
        let _ = state.jobs().update(id, |j| {
            j.status = JobStatus::Failed;
            j.error = Some(format!("{e:#}"));
        });
    }
}
