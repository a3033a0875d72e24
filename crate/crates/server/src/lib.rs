//! HTTP/JSON front end for the planning engine.
//!
//! Every operation is a `POST` with a JSON body (see
//! [`gravgrasp_core::api`]); file paths are resolved on the server. The
//! engine itself is synchronous, so handlers run it on the blocking pool.
//! Failures come back as an [`ErrorBody`] with status 400 (bad input),
//! 422 (planning failure) or 500.

use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::SystemTime;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use gravgrasp_core::annotation::{self, AnnotateResult, ValidationReport};
use gravgrasp_core::api::*;
use gravgrasp_core::executor::GraspPlan;
use gravgrasp_core::features::{self, FeatureVector, FileInfo};
use gravgrasp_core::pipeline::{self, BuildMemorySummary, Choosers, Memory, Scene};
use gravgrasp_core::report::Report;
use gravgrasp_core::stability_sim::{
    grasp_outcome, run_benchmark, true_cog, BenchmarkResults, Policy,
};
use gravgrasp_core::synth::{golden, GoldenFixture};

/// Error response: status plus [`ErrorBody`].
#[derive(Debug)]
pub struct ApiError(pub ErrorBody);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.0.kind {
            ErrorKind::Input => StatusCode::BAD_REQUEST,
            ErrorKind::Planning => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(self.0)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Canonical manifest path and its modification time.
type MemoryKey = (PathBuf, Option<SystemTime>);

/// Shared state: loaded memory banks keyed by manifest path and mtime.
#[derive(Default)]
pub struct AppState {
    memories: RwLock<HashMap<MemoryKey, Arc<Memory>>>,
}

impl AppState {
    fn memory(&self, manifest: &Path) -> Result<Arc<Memory>, ErrorBody> {
        let canonical = std::fs::canonicalize(manifest).unwrap_or_else(|_| manifest.to_path_buf());
        let mtime = std::fs::metadata(&canonical).and_then(|m| m.modified()).ok();
        let key = (canonical, mtime);
        if let Some(m) = self.memories.read().expect("memory cache lock").get(&key) {
            return Ok(Arc::clone(m));
        }
        let memory = Arc::new(Memory::load(manifest)?);
        self.memories
            .write()
            .expect("memory cache lock")
            .insert(key, Arc::clone(&memory));
        Ok(memory)
    }
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> Result<T, ErrorBody> + Send + 'static,
    T: Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(Ok(v)) => Ok(Json(v)),
        Ok(Err(e)) => Err(ApiError(e)),
        Err(e) => Err(ApiError(ErrorBody::internal(format!("worker failed: {e}")))),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/annotate", post(annotate))
        .route("/dataset/validate", post(validate_dataset))
        .route("/memory/build", post(build_memory))
        .route("/memory/query", post(query_memory))
        .route("/plan", post(plan))
        .route("/verify-execute", post(verify_execute))
        .route("/simulate", post(simulate))
        .route("/bench", post(bench))
        .route("/report", post(report))
        .route("/features/check", post(check_features))
        .route("/fixtures/golden", post(golden_fixture))
        .with_state(state)
}

pub fn app() -> Router {
    router(Arc::new(AppState::default()))
}

pub async fn serve(listener: TcpListener) -> io::Result<()> {
    tracing::info!(addr = ?listener.local_addr().ok(), "serving");
    axum::serve(listener, app()).await
}

/// Binds `addr` and serves in a background task.
pub async fn spawn(addr: SocketAddr) -> io::Result<(SocketAddr, JoinHandle<io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((local, tokio::spawn(serve(listener))))
}

async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

async fn annotate(Json(req): Json<AnnotateRequest>) -> ApiResult<Vec<AnnotateResult>> {
    blocking(move || annotation::annotate_csv(req.csv.as_bytes()).map_err(ErrorBody::input)).await
}

async fn validate_dataset(Json(req): Json<ValidateDatasetRequest>) -> ApiResult<ValidationReport> {
    blocking(move || {
        let manifest = annotation::load_manifest(&req.manifest).map_err(ErrorBody::input)?;
        let expected = match &req.expected {
            Some(p) => annotation::load_expected_counts(p).map_err(ErrorBody::input)?,
            None => annotation::reference_counts(),
        };
        let base = req.manifest.parent().unwrap_or(Path::new("."));
        Ok(annotation::validate_dataset(&manifest, base, Some(&expected)))
    })
    .await
}

async fn build_memory(Json(req): Json<BuildMemoryRequest>) -> ApiResult<BuildMemorySummary> {
    blocking(move || Ok(pipeline::build_memory(&req.dataset, &req.out)?)).await
}

async fn query_memory(
    State(state): State<Arc<AppState>>,
    Json(req): Json<QueryMemoryRequest>,
) -> ApiResult<Vec<QueryHit>> {
    blocking(move || {
        let memory = state.memory(&req.memory)?;
        let query = FeatureVector::read(&req.fvec).map_err(ErrorBody::input)?;
        let hits = memory.bank.retrieve_topk(&query, req.k).map_err(ErrorBody::input)?;
        Ok(hits
            .iter()
            .map(|h| QueryHit {
                id: h.entry.id.clone(),
                category: h.entry.category.clone(),
                index: h.index,
                similarity: h.similarity,
            })
            .collect())
    })
    .await
}

async fn plan(State(state): State<Arc<AppState>>, Json(req): Json<PlanRequest>) -> ApiResult<GraspPlan> {
    blocking(move || {
        let scene = Scene::load(&req.scene)?;
        let memory = state.memory(&req.memory)?;
        let choosers = Choosers::from_config(&req.config);
        Ok(pipeline::plan(&scene, &req.instruction, &memory, &req.config, &choosers)?)
    })
    .await
}

async fn verify_execute(
    State(state): State<Arc<AppState>>,
    Json(req): Json<PlanRequest>,
) -> ApiResult<VerifyExecuteResponse> {
    blocking(move || {
        let scene = Scene::load(&req.scene)?;
        let memory = state.memory(&req.memory)?;
        let choosers = Choosers::from_config(&req.config);
        let (outcome, error) = pipeline::verify_execute(&scene, &req.instruction, &memory, &req.config, &choosers);
        Ok(VerifyExecuteResponse {
            outcome,
            error: error.map(ErrorBody::from),
        })
    })
    .await
}

async fn simulate(Json(req): Json<SimulateRequest>) -> ApiResult<SimulateResponse> {
    blocking(move || {
        req.model.validate().map_err(ErrorBody::input)?;
        req.gripper.validate().map_err(ErrorBody::input)?;
        let cog = true_cog(&req.model);
        let point = req.grasp_point.unwrap_or(cog);
        let outcome = grasp_outcome(&req.model, point, &req.gripper).map_err(ErrorBody::input)?;
        Ok(SimulateResponse {
            true_cog: cog,
            grasp_point: point,
            outcome,
        })
    })
    .await
}

async fn bench(Json(req): Json<BenchRequest>) -> ApiResult<BenchmarkResults> {
    blocking(move || {
        let family = req.family.unwrap_or_default();
        let policies = if req.policies.is_empty() {
            Policy::REQUIRED.to_vec()
        } else {
            req.policies
        };
        run_benchmark(&family, &policies, &req.config).map_err(ErrorBody::input)
    })
    .await
}

async fn report(Json(req): Json<ReportRequest>) -> ApiResult<ReportResponse> {
    blocking(move || {
        let report = match req {
            ReportRequest::Results(r) => Report::from_results(&r),
            ReportRequest::Csv(text) => Report::from_csv(text.as_bytes()).map_err(ErrorBody::input)?,
        };
        Ok(ReportResponse {
            table: report.render_table(),
            csv: report.to_csv(),
        })
    })
    .await
}

async fn check_features(Json(req): Json<PathRequest>) -> ApiResult<FileInfo> {
    blocking(move || features::validate_file(&req.path).map_err(ErrorBody::input)).await
}

async fn golden_fixture(Json(req): Json<PathRequest>) -> ApiResult<GoldenFixture> {
    blocking(move || golden::write(&req.path).map_err(ErrorBody::input)).await
}
