//! Thin async client for the gravgrasp service.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use gravgrasp_core::annotation::{AnnotateResult, ValidationReport};
use gravgrasp_core::api::*;
use gravgrasp_core::executor::GraspPlan;
use gravgrasp_core::features::FileInfo;
use gravgrasp_core::pipeline::BuildMemorySummary;
use gravgrasp_core::stability_sim::BenchmarkResults;
use gravgrasp_core::synth::GoldenFixture;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    /// The service answered with an error body.
    #[error("{body} (HTTP {status})")]
    Api { status: u16, body: ErrorBody },
    #[error("unexpected HTTP {status}: {text}")]
    Unexpected { status: u16, text: String },
}

impl ClientError {
    /// Process exit code for a command-line caller.
    pub fn exit_code(&self) -> i32 {
        match self {
            ClientError::Api { body, .. } => body.kind.exit_code(),
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await?;
        match serde_json::from_str::<ErrorBody>(&text) {
            Ok(body) => Err(ClientError::Api { status: status.as_u16(), body }),
            Err(_) => Err(ClientError::Unexpected { status: status.as_u16(), text }),
        }
    }

    async fn post<B: Serialize + ?Sized, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        let resp = self.http.post(format!("{}{path}", self.base)).json(body).send().await?;
        Self::decode(resp).await
    }

    pub async fn health(&self) -> Result<Health> {
        let resp = self.http.get(format!("{}/health", self.base)).send().await?;
        Self::decode(resp).await
    }

    pub async fn annotate(&self, csv: String) -> Result<Vec<AnnotateResult>> {
        self.post("/annotate", &AnnotateRequest { csv }).await
    }

    pub async fn validate_dataset(&self, manifest: PathBuf, expected: Option<PathBuf>) -> Result<ValidationReport> {
        self.post("/dataset/validate", &ValidateDatasetRequest { manifest, expected }).await
    }

    pub async fn build_memory(&self, dataset: PathBuf, out: PathBuf) -> Result<BuildMemorySummary> {
        self.post("/memory/build", &BuildMemoryRequest { dataset, out }).await
    }

    pub async fn query_memory(&self, req: &QueryMemoryRequest) -> Result<Vec<QueryHit>> {
        self.post("/memory/query", req).await
    }

    pub async fn plan(&self, req: &PlanRequest) -> Result<GraspPlan> {
        self.post("/plan", req).await
    }

    pub async fn verify_execute(&self, req: &PlanRequest) -> Result<VerifyExecuteResponse> {
        self.post("/verify-execute", req).await
    }

    pub async fn simulate(&self, req: &SimulateRequest) -> Result<SimulateResponse> {
        self.post("/simulate", req).await
    }

    pub async fn bench(&self, req: &BenchRequest) -> Result<BenchmarkResults> {
        self.post("/bench", req).await
    }

    pub async fn report(&self, req: &ReportRequest) -> Result<ReportResponse> {
        self.post("/report", req).await
    }

    pub async fn check_features(&self, path: &Path) -> Result<FileInfo> {
        self.post("/features/check", &PathRequest { path: path.to_path_buf() }).await
    }

    pub async fn golden_fixture(&self, root: &Path) -> Result<GoldenFixture> {
        self.post("/fixtures/golden", &PathRequest { path: root.to_path_buf() }).await
    }
}
