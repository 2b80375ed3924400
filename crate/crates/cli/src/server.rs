//! HTTP/JSON API. Heavy work runs on the blocking pool or on a worker thread per job.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tipping_core::tipgan::{GanConfig, RunManifest};
use tipping_core::ModelParams;

use crate::error::ApiError;
use crate::jobs::{Artifact, JobKind, JobRegistry};
use crate::service::{self, SimulateRequest, SweepRequest, TranslateRequest, SWEEP_FILES};
use crate::store::{check_id, DataRoot, DatasetRequest};

pub const OPENAPI_JSON: &str = include_str!("../openapi.json");

#[derive(Clone)]
pub struct AppState {
    pub store: DataRoot,
    pub jobs: JobRegistry,
    pub base: ModelParams,
    run_locks: Arc<Mutex<HashMap<String, Arc<Mutex<()>>>>>,
}

impl AppState {
    pub fn new(store: DataRoot, base: ModelParams) -> Self {
        Self { store, jobs: JobRegistry::new(), base, run_locks: Arc::default() }
    }

    fn run_lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.run_locks.lock().expect("lock table poisoned").entry(id.to_string()).or_default().clone()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/openapi.json", get(openapi))
        .route("/api/simulate", post(simulate))
        .route("/api/sweep", post(sweep))
        .route("/api/ask", post(ask))
        .route("/api/translate", post(translate))
        .route("/api/datasets", post(create_dataset))
        .route("/api/datasets/{id}", get(dataset_info))
        .route("/api/gan/train", post(gan_train))
        .route("/api/gan/runs", get(list_runs))
        .route("/api/gan/runs/{id}", get(run_info))
        .route("/api/gan/runs/{id}/audit", get(run_audit))
        .route("/api/gan/runs/{id}/samples", get(run_samples))
        .route("/api/jobs", get(list_jobs))
        .route("/api/jobs/{id}", get(job))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route", Value::Null) })
        .with_state(state)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

/// Body extractor that reports malformed JSON in the shared error shape.
pub struct Body<T>(pub T);

impl<S, T> axum::extract::FromRequest<S> for Body<T>
where
    T: serde::de::DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: axum::extract::Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(e) => Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", e.body_text(), Value::Null)),
        }
    }
}

fn json_text(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn openapi() -> Response {
    json_text(OPENAPI_JSON.to_string())
}

async fn simulate(State(st): State<AppState>, Body(req): Body<SimulateRequest>) -> Result<Response, ApiError> {
    let base = st.base;
    let resp = blocking(move || service::simulate(&req, &base)).await?;
    Ok(Json(resp).into_response())
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
struct SweepBody {
    #[serde(flatten)]
    request: SweepRequest,
    /// Run as a background job and write the diagram under `sweeps/<job id>/`.
    background: bool,
}

async fn sweep(State(st): State<AppState>, Body(body): Body<SweepBody>) -> Result<Response, ApiError> {
    let base = st.base;
    if !body.background {
        let resp = blocking(move || service::sweep(&body.request, &base)).await?;
        return Ok(Json(resp).into_response());
    }
    let r = &body.request;
    let target = format!("m_ek={},d_low0={},fw_n=[{},{}],steps={}", r.m_ek, r.d_low0, r.fwn_min, r.fwn_max, r.steps);
    let job = st.jobs.submit(JobKind::Sweep, &target)?;
    let (jobs, store, id) = (st.jobs.clone(), st.store.clone(), job.id.clone());
    std::thread::spawn(move || {
        jobs.start(&id);
        let rel = format!("sweeps/{id}");
        let outcome = service::sweep(&body.request, &base).and_then(|resp| {
            service::write_sweep(&store.root.join(&rel), &resp)?;
            let artifacts = SWEEP_FILES
                .iter()
                .map(|f| Artifact::from_file(&store.root, &format!("{rel}/{f}")))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((artifacts, json!({ "summary": resp.summary, "dir": rel })))
        });
        settle(&jobs, &id, outcome);
    });
    Ok((StatusCode::ACCEPTED, Json(job)).into_response())
}

fn settle(jobs: &JobRegistry, id: &str, outcome: Result<(Vec<Artifact>, Value), ApiError>) {
    match outcome {
        Ok((artifacts, result)) => jobs.finish(id, artifacts, result),
        Err(e) => jobs.fail(id, e.body),
    };
}

#[derive(Debug, Deserialize)]
struct AskBody {
    question: String,
}

async fn ask(State(st): State<AppState>, Body(body): Body<AskBody>) -> Result<Response, ApiError> {
    let base = st.base;
    let text = blocking(move || service::ask_json(&body.question, &base)).await?;
    Ok(json_text(text))
}

async fn translate(Body(req): Body<TranslateRequest>) -> Result<Response, ApiError> {
    Ok(Json(service::translate(&req)?).into_response())
}

#[derive(Debug, Deserialize)]
struct DatasetBody {
    id: String,
    #[serde(flatten)]
    request: DatasetRequest,
}

fn dataset_artifacts(store: &DataRoot, id: &str) -> Result<Vec<Artifact>, ApiError> {
    let mut out = Vec::new();
    for part in ["all", "train", "test"] {
        for ext in ["csv", "manifest.json"] {
            out.push(Artifact::from_file(&store.root, &format!("datasets/{id}/{part}.{ext}"))?);
        }
    }
    Ok(out)
}

async fn create_dataset(State(st): State<AppState>, Body(body): Body<DatasetBody>) -> Result<Response, ApiError> {
    check_id(&body.id)?;
    if st.store.dataset_exists(&body.id) {
        return Err(ApiError::conflict(format!("dataset {:?} already exists", body.id), json!({ "id": body.id })));
    }
    let job = st.jobs.submit(JobKind::Dataset, &body.id)?;
    let (jobs, store, id) = (st.jobs.clone(), st.store.clone(), job.id.clone());
    std::thread::spawn(move || {
        jobs.start(&id);
        let outcome = store.create_dataset(&body.id, &body.request).and_then(|info| {
            Ok((dataset_artifacts(&store, &body.id)?, serde_json::to_value(info).expect("info serializes")))
        });
        settle(&jobs, &id, outcome);
    });
    Ok((StatusCode::ACCEPTED, Json(job)).into_response())
}

async fn dataset_info(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let info = blocking(move || st.store.dataset_info(&id)).await?;
    Ok(Json(info).into_response())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct TrainBody {
    pub run_id: Option<String>,
    pub dataset_id: String,
    pub config: GanConfig,
}

impl Default for TrainBody {
    fn default() -> Self {
        Self { run_id: None, dataset_id: "default".into(), config: GanConfig::default() }
    }
}

async fn gan_train(State(st): State<AppState>, Body(body): Body<TrainBody>) -> Result<Response, ApiError> {
    body.config.validate()?;
    check_id(&body.dataset_id)?;
    let run_id = body
        .run_id
        .clone()
        .unwrap_or_else(|| format!("n{}-s{}-e{}", body.config.n_generators, body.config.seed, body.config.epochs));
    check_id(&run_id)?;
    if st.store.run_exists(&run_id) {
        return Err(ApiError::conflict(format!("run {run_id:?} already exists"), json!({ "run_id": run_id })));
    }
    let job = st.jobs.submit(JobKind::GanTrain, &run_id)?;
    let (jobs, store, id, lock) = (st.jobs.clone(), st.store.clone(), job.id.clone(), st.run_lock(&run_id));
    std::thread::spawn(move || {
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        jobs.start(&id);
        let outcome = (|| {
            if !store.dataset_exists(&body.dataset_id) {
                store.create_dataset(&body.dataset_id, &DatasetRequest::default())?;
            }
            jobs.progress(&id, 0.05);
            let outcome = store.train_run(&run_id, &body.dataset_id, &body.config, |done, total| {
                jobs.progress(&id, 0.05 + 0.95 * done as f64 / total.max(1) as f64);
            })?;
            Ok((run_artifacts(&store, &run_id)?, serde_json::to_value(outcome).expect("outcome serializes")))
        })();
        settle(&jobs, &id, outcome);
    });
    Ok((StatusCode::ACCEPTED, Json(job)).into_response())
}

fn run_artifacts(store: &DataRoot, run_id: &str) -> Result<Vec<Artifact>, ApiError> {
    let text = std::fs::read_to_string(store.run_dir(run_id).join("run.json"))?;
    let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| ApiError::internal(e.to_string()))?;
    ["run.json", "config.json", "losses.csv"]
        .into_iter()
        .chain(manifest.checkpoints.iter().map(|(file, _)| file.as_str()))
        .map(|f| Artifact::from_file(&store.root, &format!("runs/{run_id}/{f}")).map_err(ApiError::from))
        .collect()
}

async fn list_runs(State(st): State<AppState>) -> Result<Response, ApiError> {
    let dir: PathBuf = st.store.root.join("runs");
    let mut ids = Vec::new();
    if let Ok(entries) = std::fs::read_dir(&dir) {
        for e in entries.flatten() {
            let name = e.file_name().to_string_lossy().into_owned();
            if st.store.run_exists(&name) {
                ids.push(name);
            }
        }
    }
    ids.sort();
    Ok(Json(json!({ "runs": ids })).into_response())
}

async fn run_info(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let manifest = blocking(move || st.store.run_manifest(&id)).await?;
    Ok(Json(manifest).into_response())
}

async fn run_audit(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let audit = blocking(move || {
        st.store.stored_audit(&id)?.ok_or_else(|| {
            ApiError::new(
                StatusCode::NOT_FOUND,
                "not_sampled",
                format!("run {id:?} has no samples yet; request its samples first"),
                json!({ "id": id }),
            )
        })
    })
    .await?;
    Ok(Json(audit).into_response())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
struct SampleQuery {
    /// Samples per generator.
    n: usize,
    seed: u64,
}

impl Default for SampleQuery {
    fn default() -> Self {
        Self { n: 500, seed: 0 }
    }
}

async fn run_samples(
    State(st): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<SampleQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    check_id(&id)?;
    if st.jobs.is_active(JobKind::GanTrain, &id) {
        return Err(ApiError::conflict(format!("run {id:?} is still training"), json!({ "id": id })));
    }
    let lock = st.run_lock(&id);
    let out = blocking(move || {
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        st.store.sample_run(&id, q.n, q.seed)
    })
    .await?;
    Ok(Json(out).into_response())
}

async fn list_jobs(State(st): State<AppState>) -> Response {
    Json(json!({ "jobs": st.jobs.list() })).into_response()
}

async fn job(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    st.jobs.get(&id).map(|j| Json(j).into_response()).ok_or_else(|| ApiError::not_found("job", &id))
}

pub async fn serve(state: AppState, addr: &str, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let mut app = router(state);
    if let Some(dir) = static_dir {
        app = app.fallback_service(tower_http::services::ServeDir::new(dir));
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app).await
}
