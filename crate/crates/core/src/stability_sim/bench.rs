//! Policy benchmark over randomly sampled, rendered tools.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{grasp_outcome, true_cog, GripperParams, OutcomeKind, PartRole, RigidObjectModel, SimError, ToolFamily};
use crate::cog_locator::{select_cog, ChooserContext};
use crate::correspondence::{generate_candidates, SourceView};
use crate::features::{FeatureMap, FeatureVector};
use crate::geometry::{Pixel, Point2};
use crate::grasp_filter::{filter_poses, project_point, CameraIntrinsics, GraspPose};
use crate::mask::Mask;
use crate::memory_bank::{CogSource, FeatureSource, MemoryBank, MemoryEntry};
use crate::synth::{
    global_descriptor, render_features, render_mask, sample_poses, Placement, TableCamera,
};

/// Grasp-selection strategies compared by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Exemplar-transferred CoG, then nearest/highest-scoring pose.
    CogPolicy,
    /// Highest-scoring pose on the graspable part (the grip).
    AffordancePolicy,
    /// Best pose among those nearest to the mask's endpoints and center.
    KeypointPolicy,
    /// Highest-scoring pose on the object, ignoring the CoG.
    ScorePolicy,
    /// Grasps at the true CoG (or the nearest on-object point).
    OraclePolicy,
}

impl Policy {
    pub const REQUIRED: [Policy; 3] = [Policy::CogPolicy, Policy::AffordancePolicy, Policy::KeypointPolicy];

    pub fn name(self) -> &'static str {
        match self {
            Policy::CogPolicy => "cog_policy",
            Policy::AffordancePolicy => "affordance_policy",
            Policy::KeypointPolicy => "keypoint_policy",
            Policy::ScorePolicy => "score_policy",
            Policy::OraclePolicy => "oracle_policy",
        }
    }

    pub fn parse(name: &str) -> Option<Policy> {
        [
            Policy::CogPolicy,
            Policy::AffordancePolicy,
            Policy::KeypointPolicy,
            Policy::ScorePolicy,
            Policy::OraclePolicy,
        ]
        .into_iter()
        .find(|p| p.name() == name)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub trials: usize,
    pub seed: u64,
    pub gripper: GripperParams,
    pub poses_per_object: usize,
    pub exemplars_per_category: usize,
    pub top_k: usize,
    pub radius_px: f64,
    /// Standard deviation of descriptor noise.
    pub descriptor_noise: f64,
    /// Placement rotation is uniform in `±max_angle` radians, with a random
    /// half-turn flip.
    pub max_angle: f64,
    /// Placement offset is uniform in `±max_offset` meters on each axis.
    pub max_offset: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            seed: 0,
            gripper: GripperParams::calibrated(),
            poses_per_object: 40,
            exemplars_per_category: 6,
            top_k: crate::memory_bank::DEFAULT_TOP_K,
            radius_px: crate::grasp_filter::DEFAULT_RADIUS_PX,
            descriptor_noise: 0.05,
            max_angle: 0.3,
            max_offset: 0.015,
        }
    }
}

/// Aggregate for one (policy, category) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellResult {
    pub policy: Policy,
    pub category: String,
    pub trials: usize,
    pub successes: usize,
}

impl CellResult {
    pub fn rate(&self) -> Option<f64> {
        (self.trials > 0).then(|| self.successes as f64 / self.trials as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub category: String,
    pub policy: Policy,
    pub grasp_point: Option<Point2>,
    pub outcome: Option<OutcomeKind>,
    pub success: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResults {
    pub seed: u64,
    pub trials: usize,
    pub policies: Vec<Policy>,
    pub categories: Vec<String>,
    pub cells: Vec<CellResult>,
    pub records: Vec<TrialRecord>,
}

impl BenchmarkResults {
    /// Builds the aggregate cells from per-trial records.
    pub fn from_records(
        seed: u64,
        trials: usize,
        policies: Vec<Policy>,
        categories: Vec<String>,
        records: Vec<TrialRecord>,
    ) -> Self {
        let mut cells = Vec::new();
        for policy in &policies {
            for category in &categories {
                let rows = records.iter().filter(|r| r.policy == *policy && &r.category == category);
                let (n, s) = rows.fold((0, 0), |(n, s), r| (n + 1, s + usize::from(r.success)));
                cells.push(CellResult {
                    policy: *policy,
                    category: category.clone(),
                    trials: n,
                    successes: s,
                });
            }
        }
        Self {
            seed,
            trials,
            policies,
            categories,
            cells,
            records,
        }
    }

    pub fn cell(&self, policy: Policy, category: &str) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.policy == policy && c.category == category)
    }

    /// Pooled `(successes, trials)` for a policy.
    pub fn total(&self, policy: Policy) -> (usize, usize) {
        self.cells
            .iter()
            .filter(|c| c.policy == policy)
            .fold((0, 0), |(s, n), c| (s + c.successes, n + c.trials))
    }

    pub fn success_rate(&self, policy: Policy) -> Option<f64> {
        let (s, n) = self.total(policy);
        (n > 0).then(|| s as f64 / n as f64)
    }
}

/// Memory exemplar images: same scale as the scene camera, object centered.
fn exemplar_camera() -> TableCamera {
    let base = TableCamera::default();
    TableCamera {
        height: 128,
        intrinsics: CameraIntrinsics { cy: 64.0, ..base.intrinsics },
        ..base
    }
}

/// Renders exemplar feature maps on demand.
struct SynthFeatureSource {
    cam: TableCamera,
    objects: HashMap<String, (RigidObjectModel, Placement)>,
}

impl FeatureSource for SynthFeatureSource {
    fn feature_map(&self, entry: &MemoryEntry) -> Result<Arc<FeatureMap>, String> {
        let (model, at) = self
            .objects
            .get(&entry.id)
            .ok_or_else(|| format!("unknown exemplar {}", entry.id))?;
        Ok(Arc::new(render_features(model, at, &self.cam)))
    }
}

/// Integer mask pixel nearest to `p` (row-major first on ties).
fn nearest_mask_pixel(mask: &Mask, p: Pixel) -> Option<Pixel> {
    mask.iter_set()
        .map(|(u, v)| Pixel::new(u as f64, v as f64))
        .min_by(|a, b| a.distance(&p).total_cmp(&b.distance(&p)))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn build_memory(
    family: &ToolFamily,
    config: &BenchConfig,
) -> Result<(MemoryBank, SynthFeatureSource), SimError> {
    let cam = exemplar_camera();
    let mut rng = stream_rng(config.seed, 0);
    let mut bank = MemoryBank::new();
    let mut objects = HashMap::new();
    for index in 0..family.categories.len() {
        for e in 0..config.exemplars_per_category {
            let inst = family.sample(index, &mut rng);
            let at = Placement::centered(&inst.model, 0.0);
            let mask = render_mask(&inst.model, &at, &cam);
            // Annotators mark the CoG on the object surface.
            let on_object = inst.model.nearest_point(true_cog(&inst.model));
            let cog = nearest_mask_pixel(&mask, cam.to_pixel(&at, on_object))
                .ok_or_else(|| SimError::InvalidFamily(format!("{} renders empty", inst.category)))?;
            let descriptor = global_descriptor(index, &inst.model, config.descriptor_noise, &mut rng);
            let id = format!("{}-{e}", inst.category.replace(' ', "_"));
            let entry = MemoryEntry {
                id: id.clone(),
                category: inst.category.clone(),
                image_path: format!("synthetic/{id}.png").into(),
                featmap_path: format!("synthetic/{id}.fmap").into(),
                fvec: FeatureVector::normalized(descriptor).map_err(|e| SimError::InvalidFamily(e.to_string()))?,
                cog,
                source: CogSource::Suspension,
                image_size: (cam.width, cam.height),
            };
            bank = bank.add_entry(entry).map_err(|e| SimError::InvalidFamily(e.to_string()))?;
            objects.insert(id, (inst.model, at));
        }
    }
    Ok((bank, SynthFeatureSource { cam, objects }))
}

/// What a non-oracle policy may observe about a trial.
struct TrialScene {
    cam: TableCamera,
    mask: Mask,
    grip_mask: Mask,
    features: FeatureMap,
    query: FeatureVector,
    poses: Vec<GraspPose>,
}

impl TrialScene {
    /// `(index, projection)` of poses landing on the object.
    fn on_object(&self) -> Vec<(usize, Pixel)> {
        self.poses
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let px = project_point(&self.cam.intrinsics, p.position).ok()?;
                self.mask.contains(&px).then_some((i, px))
            })
            .collect()
    }

    fn best_scoring(&self, indices: impl Iterator<Item = usize>) -> Option<usize> {
        indices.min_by(|&a, &b| self.poses[b].score.total_cmp(&self.poses[a].score).then(a.cmp(&b)))
    }
}

fn cog_policy(
    scene: &TrialScene,
    bank: &MemoryBank,
    source: &SynthFeatureSource,
    config: &BenchConfig,
) -> Result<Pixel, String> {
    let retrieved = bank.retrieve_topk(&scene.query, config.top_k).map_err(|e| e.to_string())?;
    let maps: Vec<Result<Arc<FeatureMap>, String>> =
        retrieved.iter().map(|r| source.feature_map(r.entry)).collect();
    let views: Vec<SourceView<'_>> = retrieved
        .iter()
        .zip(&maps)
        .map(|(r, m)| SourceView {
            entry: r.entry,
            map: m.as_ref().map(|m| m.as_ref()).map_err(|e| e.clone()),
        })
        .collect();
    let (candidates, _) = generate_candidates(&scene.features, &scene.mask, &views).map_err(|e| e.to_string())?;
    let cog = select_cog(&candidates, &ChooserContext::default(), None).map_err(|e| e.to_string())?;
    let selected = filter_poses(&scene.poses, cog.point, &scene.mask, &scene.cam.intrinsics, config.radius_px)
        .map_err(|e| e.to_string())?;
    Ok(selected.projected)
}

fn affordance_policy(scene: &TrialScene) -> Result<Pixel, String> {
    let on = scene.on_object();
    let in_grip = on.iter().filter(|(_, px)| scene.grip_mask.contains(px)).map(|(i, _)| *i);
    let index = scene
        .best_scoring(in_grip)
        .or_else(|| scene.best_scoring(on.iter().map(|(i, _)| *i)))
        .ok_or("no pose on the object")?;
    Ok(on.iter().find(|(i, _)| *i == index).expect("index from list").1)
}

/// Mask endpoints along the principal axis and the mask centroid.
fn mask_keypoints(mask: &Mask) -> Option<[Pixel; 3]> {
    let pts: Vec<(f64, f64)> = mask.iter_set().map(|(u, v)| (u as f64, v as f64)).collect();
    if pts.is_empty() {
        return None;
    }
    let n = pts.len() as f64;
    let (mu, mv) = pts.iter().fold((0.0, 0.0), |(a, b), (u, v)| (a + u / n, b + v / n));
    let (mut uu, mut uv, mut vv) = (0.0, 0.0, 0.0);
    for (u, v) in &pts {
        uu += (u - mu) * (u - mu);
        uv += (u - mu) * (v - mv);
        vv += (v - mv) * (v - mv);
    }
    let major = 0.5 * (2.0 * uv).atan2(uu - vv);
    let (du, dv) = (major.cos(), major.sin());
    let proj = |p: &&(f64, f64)| (p.0 - mu) * du + (p.1 - mv) * dv;
    let lo = pts.iter().min_by(|a, b| proj(a).total_cmp(&proj(b)))?;
    let hi = pts.iter().max_by(|a, b| proj(a).total_cmp(&proj(b)))?;
    Some([Pixel::new(lo.0, lo.1), Pixel::new(mu, mv), Pixel::new(hi.0, hi.1)])
}

fn keypoint_policy(scene: &TrialScene) -> Result<Pixel, String> {
    let on = scene.on_object();
    let keypoints = mask_keypoints(&scene.mask).ok_or("empty mask")?;
    let nearest: Vec<(usize, Pixel)> = keypoints
        .iter()
        .filter_map(|k| {
            on.iter()
                .min_by(|a, b| a.1.distance(k).total_cmp(&b.1.distance(k)).then(a.0.cmp(&b.0)))
                .copied()
        })
        .collect();
    let index = scene.best_scoring(nearest.iter().map(|(i, _)| *i)).ok_or("no pose on the object")?;
    Ok(nearest.iter().find(|(i, _)| *i == index).expect("index from list").1)
}

fn score_policy(scene: &TrialScene) -> Result<Pixel, String> {
    let on = scene.on_object();
    let index = scene.best_scoring(on.iter().map(|(i, _)| *i)).ok_or("no pose on the object")?;
    Ok(on.iter().find(|(i, _)| *i == index).expect("index from list").1)
}

fn run_trial(
    trial: usize,
    family: &ToolFamily,
    policies: &[Policy],
    bank: &MemoryBank,
    source: &SynthFeatureSource,
    config: &BenchConfig,
) -> Vec<TrialRecord> {
    let mut rng = stream_rng(config.seed, trial as u64 + 1);
    let category_index = trial % family.categories.len();
    let inst = family.sample(category_index, &mut rng);
    let flip = if rng.random_bool(0.5) { std::f64::consts::PI } else { 0.0 };
    let angle = flip + rng.random_range(-config.max_angle..=config.max_angle);
    let placement = Placement::centered(&inst.model, angle).translated(
        rng.random_range(-config.max_offset..=config.max_offset),
        rng.random_range(-config.max_offset..=config.max_offset),
    );
    let cam = TableCamera::default();
    let grip = RigidObjectModel {
        parts: inst.model.parts.iter().filter(|p| p.role == PartRole::Grip).copied().collect(),
    };
    let descriptor = global_descriptor(category_index, &inst.model, config.descriptor_noise, &mut rng);
    let scene = TrialScene {
        cam,
        mask: render_mask(&inst.model, &placement, &cam),
        grip_mask: render_mask(&grip, &placement, &cam),
        features: render_features(&inst.model, &placement, &cam),
        query: FeatureVector::normalized(descriptor).expect("descriptor has a one-hot component"),
        poses: sample_poses(&inst.model, &placement, &cam, config.poses_per_object, &mut rng),
    };

    policies
        .iter()
        .map(|&policy| {
            let picked = match policy {
                Policy::CogPolicy => cog_policy(&scene, bank, source, config).map(|px| cam.to_object(&placement, px)),
                Policy::AffordancePolicy => affordance_policy(&scene).map(|px| cam.to_object(&placement, px)),
                Policy::KeypointPolicy => keypoint_policy(&scene).map(|px| cam.to_object(&placement, px)),
                Policy::ScorePolicy => score_policy(&scene).map(|px| cam.to_object(&placement, px)),
                Policy::OraclePolicy => Ok(inst.model.nearest_point(true_cog(&inst.model))),
            };
            let (grasp_point, outcome, note) = match picked {
                Ok(p) => match grasp_outcome(&inst.model, p, &config.gripper) {
                    Ok(o) => (Some(p), Some(o.kind), None),
                    Err(e) => (Some(p), None, Some(e.to_string())),
                },
                Err(e) => (None, None, Some(e)),
            };
            TrialRecord {
                trial,
                category: inst.category.clone(),
                policy,
                grasp_point,
                outcome,
                success: outcome == Some(OutcomeKind::Lifted),
                note,
            }
        })
        .collect()
}

/// Runs `config.trials` trials, cycling through the family's categories.
/// Each trial draws from its own RNG stream, so results do not depend on
/// scheduling.
pub fn run_benchmark(
    family: &ToolFamily,
    policies: &[Policy],
    config: &BenchConfig,
) -> Result<BenchmarkResults, SimError> {
    if config.trials == 0 {
        return Err(SimError::NoTrials);
    }
    if policies.is_empty() {
        return Err(SimError::NoPolicies);
    }
    family.validate()?;
    config.gripper.validate()?;
    let (bank, source) = build_memory(family, config)?;
    let records: Vec<TrialRecord> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(t, family, policies, &bank, &source, config))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    Ok(BenchmarkResults::from_records(
        config.seed,
        config.trials,
        policies.to_vec(),
        family.names(),
        records,
    ))
}
