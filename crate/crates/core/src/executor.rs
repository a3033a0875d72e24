//! Closed-loop plan verification.
//!
//! Before execution the planned grasp projection is compared with the
//! current projection of the tracked reference point; if the object moved
//! more than `epsilon` pixels the whole perception chain is re-run, up to
//! `max_replans` times.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cog_locator::CogEstimate;
use crate::correspondence::CandidateWarning;
use crate::geometry::Pixel;
use crate::grasp_filter::{project_point, CameraIntrinsics, GraspError, SelectedGrasp};

pub const DEFAULT_EPSILON_PX: f64 = 5.0;
pub const DEFAULT_MAX_REPLANS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Localize,
    #[serde(rename = "LocateCoG")]
    LocateCog,
    GeneratePoses,
    Filter,
    Verify,
    Execute,
    Replan,
    Failed,
}

impl Stage {
    pub fn is_terminal(self) -> bool {
        matches!(self, Stage::Execute | Stage::Failed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Execute,
    Replan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Event {
    /// The current perception stage produced its output.
    StageComplete,
    StageFailed(String),
    Verified(Decision),
    /// Leave `Replan` and start perception again.
    Restart,
}

#[derive(Debug, Error, PartialEq)]
pub enum ExecutorError {
    #[error("illegal transition from {from:?} on {event:?}")]
    IllegalTransition { from: Stage, event: Event },
    #[error("no current observation of the tracked reference point")]
    MissingObservation,
    #[error(transparent)]
    Projection(#[from] GraspError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanState {
    pub stage: Stage,
    pub replan_count: u32,
    pub max_replans: u32,
}

impl PlanState {
    pub fn new(max_replans: u32) -> Self {
        Self {
            stage: Stage::Localize,
            replan_count: 0,
            max_replans,
        }
    }
}

pub fn step(state: PlanState, event: Event) -> Result<PlanState, ExecutorError> {
    use Stage::*;
    let next = |stage| Ok(PlanState { stage, ..state });
    match (state.stage, &event) {
        (Localize, Event::StageComplete) => next(LocateCog),
        (LocateCog, Event::StageComplete) => next(GeneratePoses),
        (GeneratePoses, Event::StageComplete) => next(Filter),
        (Filter, Event::StageComplete) => next(Verify),
        (Localize | LocateCog | GeneratePoses | Filter | Verify, Event::StageFailed(_)) => {
            next(Failed)
        }
        (Verify, Event::Verified(Decision::Execute)) => next(Execute),
        (Verify, Event::Verified(Decision::Replan)) if state.replan_count >= state.max_replans => {
            next(Failed)
        }
        (Verify, Event::Verified(Decision::Replan)) => Ok(PlanState {
            stage: Replan,
            replan_count: state.replan_count + 1,
            ..state
        }),
        (Replan, Event::Restart) => next(Localize),
        _ => Err(ExecutorError::IllegalTransition {
            from: state.stage,
            event,
        }),
    }
}

/// Fully resolved grasp decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspPlan {
    pub target_id: String,
    pub target_label: String,
    pub retrieved: Vec<RetrievedRef>,
    pub cog: CogEstimate,
    pub grasp: SelectedGrasp,
    pub planned_projection: Pixel,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<CandidateWarning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedRef {
    pub id: String,
    pub similarity: f64,
}

impl GraspPlan {
    pub fn new(
        target_id: String,
        target_label: String,
        retrieved: Vec<RetrievedRef>,
        cog: CogEstimate,
        grasp: SelectedGrasp,
        cam: &CameraIntrinsics,
        warnings: Vec<CandidateWarning>,
    ) -> Result<Self, GraspError> {
        let planned_projection = project_point(cam, grasp.pose.position)?;
        Ok(Self {
            target_id,
            target_label,
            retrieved,
            cog,
            grasp,
            planned_projection,
            warnings,
        })
    }
}

/// Current state of the tracked reference point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observation {
    /// Already projected into the image.
    Pixel(Pixel),
    /// Camera-frame point, projected with the intrinsics.
    Point([f64; 3]),
}

/// Execute iff the planned and current projections are within `epsilon`
/// pixels (inclusive). Also returns the measured distance.
pub fn verify(
    plan: &GraspPlan,
    observation: Option<Observation>,
    cam: &CameraIntrinsics,
    epsilon: f64,
) -> Result<(Decision, f64), ExecutorError> {
    let current = match observation.ok_or(ExecutorError::MissingObservation)? {
        Observation::Pixel(p) => p,
        Observation::Point(x) => project_point(cam, x)?,
    };
    let d = plan.planned_projection.distance(&current);
    let decision = if d <= epsilon {
        Decision::Execute
    } else {
        Decision::Replan
    };
    Ok((decision, d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub epsilon_px: f64,
    pub max_replans: u32,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            epsilon_px: DEFAULT_EPSILON_PX,
            max_replans: DEFAULT_MAX_REPLANS,
        }
    }
}

/// Failure inside the perception chain, attributed to a loop stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageFailure {
    pub stage: Stage,
    pub message: String,
}

/// Scene access for the closed loop.
pub trait Perception {
    /// Runs localization through pose filtering on the current scene.
    fn plan(&mut self) -> Result<GraspPlan, StageFailure>;
    /// Current tracked reference point, relative to the latest plan.
    fn observe(&mut self, plan: &GraspPlan) -> Option<Observation>;
}

/// One line of the execution trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub from: Stage,
    pub to: Stage,
    pub replan_count: u32,
    pub decision_distance_px: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopOutcome {
    pub final_stage: Stage,
    pub replan_count: u32,
    pub plan: Option<GraspPlan>,
    pub trace: Vec<TraceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl LoopOutcome {
    /// Trace as JSON lines.
    pub fn trace_jsonl(&self) -> String {
        self.trace
            .iter()
            .map(|r| serde_json::to_string(r).expect("trace record serializes") + "\n")
            .collect()
    }
}

struct Recorder {
    state: PlanState,
    trace: Vec<TraceRecord>,
}

impl Recorder {
    fn fire(&mut self, event: Event, distance: Option<f64>) {
        let from = self.state.stage;
        self.state = step(self.state, event).expect("runner only fires legal events");
        self.trace.push(TraceRecord {
            from,
            to: self.state.stage,
            replan_count: self.state.replan_count,
            decision_distance_px: distance,
        });
    }
}

const PERCEPTION_STAGES: [Stage; 4] = [
    Stage::Localize,
    Stage::LocateCog,
    Stage::GeneratePoses,
    Stage::Filter,
];

/// Drives the state machine to `Execute` or `Failed`. At most
/// `max_replans + 1` planning cycles run.
pub fn run_closed_loop(
    perception: &mut dyn Perception,
    cam: &CameraIntrinsics,
    config: &LoopConfig,
) -> LoopOutcome {
    let mut rec = Recorder {
        state: PlanState::new(config.max_replans),
        trace: Vec::new(),
    };
    let mut last_plan = None;
    let mut failure = None;
    while !rec.state.stage.is_terminal() {
        match rec.state.stage {
            Stage::Localize => match perception.plan() {
                Ok(plan) => {
                    for _ in PERCEPTION_STAGES {
                        rec.fire(Event::StageComplete, None);
                    }
                    last_plan = Some(plan);
                }
                Err(f) => {
                    for stage in PERCEPTION_STAGES.iter().take_while(|s| **s != f.stage) {
                        debug_assert_eq!(rec.state.stage, *stage);
                        rec.fire(Event::StageComplete, None);
                    }
                    rec.fire(Event::StageFailed(f.message.clone()), None);
                    failure = Some(format!("{:?}: {}", f.stage, f.message));
                }
            },
            Stage::Verify => {
                let plan = last_plan.as_ref().expect("Verify is reached with a plan");
                let observation = perception.observe(plan);
                match verify(plan, observation, cam, config.epsilon_px) {
                    Ok((decision, d)) => rec.fire(Event::Verified(decision), Some(d)),
                    Err(e) => {
                        // Unverifiable plans are never executed.
                        failure = Some(e.to_string());
                        rec.fire(Event::StageFailed(e.to_string()), None);
                    }
                }
            }
            Stage::Replan => rec.fire(Event::Restart, None),
            other => unreachable!("runner never rests in {other:?}"),
        }
    }
    if rec.state.stage == Stage::Failed && failure.is_none() {
        failure = Some(format!("replan budget of {} exhausted", config.max_replans));
    }
    LoopOutcome {
        final_stage: rec.state.stage,
        replan_count: rec.state.replan_count,
        plan: last_plan,
        trace: rec.trace,
        failure,
    }
}
