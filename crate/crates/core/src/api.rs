//! Request and response bodies of the HTTP/JSON service. Paths refer to the
//! server's filesystem.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::executor::LoopOutcome;
use crate::geometry::Point2;
use crate::pipeline::{ErrorClass, PlanConfig, PlanError};
use crate::stability_sim::{BenchConfig, GraspOutcome, GripperParams, Policy, RigidObjectModel, ToolFamily};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

/// Error body returned with every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Planning,
    Input,
    Internal,
}

impl ErrorKind {
    /// Process exit code a command-line client should use.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Planning => 2,
            ErrorKind::Input => 3,
            ErrorKind::Internal => 1,
        }
    }
}

impl ErrorBody {
    pub fn input(message: impl ToString) -> Self {
        Self { stage: None, kind: ErrorKind::Input, message: message.to_string() }
    }

    pub fn planning(message: impl ToString) -> Self {
        Self { stage: None, kind: ErrorKind::Planning, message: message.to_string() }
    }

    pub fn internal(message: impl ToString) -> Self {
        Self { stage: None, kind: ErrorKind::Internal, message: message.to_string() }
    }
}

impl From<PlanError> for ErrorBody {
    fn from(e: PlanError) -> Self {
        Self {
            kind: match e.class {
                ErrorClass::Input => ErrorKind::Input,
                ErrorClass::Planning => ErrorKind::Planning,
            },
            stage: Some(e.stage),
            message: e.message,
        }
    }
}

impl std::fmt::Display for ErrorBody {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.stage {
            Some(stage) => write!(f, "stage {stage}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateRequest {
    /// Suspension-line CSV text: `image_id,x1,y1,x2,y2`, two rows per image.
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateDatasetRequest {
    pub manifest: PathBuf,
    /// Expected per-category counts; the built-in reference table when absent.
    #[serde(default)]
    pub expected: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildMemoryRequest {
    pub dataset: PathBuf,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMemoryRequest {
    pub memory: PathBuf,
    pub fvec: PathBuf,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    crate::memory_bank::DEFAULT_TOP_K
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryHit {
    pub id: String,
    pub category: String,
    pub index: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub scene: PathBuf,
    pub instruction: String,
    pub memory: PathBuf,
    #[serde(default)]
    pub config: PlanConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyExecuteResponse {
    pub outcome: LoopOutcome,
    /// The first planning failure, when the loop failed while planning.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRequest {
    pub model: RigidObjectModel,
    /// Defaults to the true CoG.
    #[serde(default)]
    pub grasp_point: Option<Point2>,
    #[serde(default)]
    pub gripper: GripperParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResponse {
    pub true_cog: Point2,
    pub grasp_point: Point2,
    pub outcome: GraspOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRequest {
    /// The default tool family when absent.
    #[serde(default)]
    pub family: Option<ToolFamily>,
    /// The three required policies when empty.
    #[serde(default)]
    pub policies: Vec<Policy>,
    #[serde(default)]
    pub config: BenchConfig,
}

/// Either benchmark results or a previously written CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportRequest {
    Results(Box<crate::stability_sim::BenchmarkResults>),
    Csv(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportResponse {
    pub table: String,
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRequest {
    pub path: PathBuf,
}
