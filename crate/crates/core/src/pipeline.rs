//! End-to-end orchestration: scene loading, target selection, CoG transfer,
//! pose filtering and the closed verify/replan loop.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{self, AnnotationMethod};
use crate::cog_locator::{select_cog, Chooser, ChooserConfig, ChooserContext, ChooserRequest, NumberedCandidate};
use crate::correspondence::{generate_candidates, SourceView};
use crate::executor::{
    run_closed_loop, GraspPlan, LoopConfig, LoopOutcome, Observation, Perception, RetrievedRef, Stage,
    StageFailure, DEFAULT_EPSILON_PX, DEFAULT_MAX_REPLANS,
};
use crate::features::{FeatureMap, FeatureVector};
use crate::geometry::Pixel;
use crate::grasp_filter::{
    filter_poses, load_poses, rotation_correction, CameraIntrinsics, GraspPose, DEFAULT_ANISOTROPY_THRESHOLD,
    DEFAULT_PATCH_HALF_WIDTH, DEFAULT_RADIUS_PX,
};
use crate::mask::Mask;
use crate::memory_bank::{CogSource, FeatureSource, ManifestEntry, MemoryBank, DEFAULT_TOP_K};
use crate::synth::{LabeledMask, Track};

/// Whether a failure stems from bad inputs or from planning itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Input,
    Planning,
}

impl ErrorClass {
    /// Process exit code for this class of failure.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Planning => 2,
            ErrorClass::Input => 3,
        }
    }
}

/// A failure attributed to exactly one named stage.
#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[error("stage {stage}: {message}")]
pub struct PlanError {
    pub stage: String,
    pub class: ErrorClass,
    pub message: String,
}

impl PlanError {
    pub fn input(stage: &str, message: impl ToString) -> Self {
        Self {
            stage: stage.into(),
            class: ErrorClass::Input,
            message: message.to_string(),
        }
    }

    pub fn planning(stage: &str, message: impl ToString) -> Self {
        Self {
            stage: stage.into(),
            class: ErrorClass::Planning,
            message: message.to_string(),
        }
    }

    /// Closed-loop stage the failing planning stage belongs to.
    fn loop_stage(&self) -> Stage {
        match self.stage.as_str() {
            "retrieve_topk" | "generate_candidates" | "select_cog" => Stage::LocateCog,
            "filter_poses" | "rotation_correction" => Stage::Filter,
            _ => Stage::Localize,
        }
    }
}

/// One labeled object in a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub id: String,
    pub label: String,
    pub mask_path: PathBuf,
    pub mask: Mask,
    /// Optional per-object query descriptor (`features/<id>.fvec`).
    pub query: Option<FeatureVector>,
}

/// A loaded scene fixture directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub dir: PathBuf,
    pub image_path: PathBuf,
    pub width: usize,
    pub height: usize,
    pub objects: Vec<SceneObject>,
    pub features: FeatureMap,
    pub query: FeatureVector,
    pub poses: Vec<GraspPose>,
    pub intrinsics: CameraIntrinsics,
    pub track: Option<Track>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

impl Scene {
    /// Loads `rgb.png`, `labels.json` with its masks, `rgb.fmap`,
    /// `rgb.fvec`, `poses.json`, `intrinsics.json` and, if present,
    /// `track.json`. A depth image may be present; it is not used.
    pub fn load(dir: &Path) -> Result<Self, PlanError> {
        let err = |m: String| PlanError::input("load_scene", m);
        let image_path = dir.join("rgb.png");
        let (w, h) = image::image_dimensions(&image_path).map_err(|e| err(format!("{}: {e}", image_path.display())))?;
        let (width, height) = (w as usize, h as usize);

        let labels: Vec<LabeledMask> = read_json(&dir.join("labels.json")).map_err(err)?;
        if labels.is_empty() {
            return Err(err("labels.json lists no objects".into()));
        }
        let mut seen = BTreeSet::new();
        let mut objects = Vec::with_capacity(labels.len());
        for l in labels {
            if !seen.insert(l.id.clone()) {
                return Err(err(format!("duplicate object id {:?}", l.id)));
            }
            if l.label.trim().is_empty() {
                return Err(err(format!("object {:?} has an empty label", l.id)));
            }
            let mask_path = dir.join(&l.mask_path);
            let mask = Mask::load_png(&mask_path).map_err(|e| err(e.to_string()))?;
            if (mask.width(), mask.height()) != (width, height) {
                return Err(err(format!(
                    "mask {} is {}x{}, image is {width}x{height}",
                    mask_path.display(),
                    mask.width(),
                    mask.height()
                )));
            }
            let fvec_path = dir.join("features").join(format!("{}.fvec", l.id));
            let query = if fvec_path.exists() {
                Some(FeatureVector::read(&fvec_path).map_err(|e| err(format!("{}: {e}", fvec_path.display())))?)
            } else {
                None
            };
            objects.push(SceneObject { id: l.id, label: l.label, mask_path, mask, query });
        }

        let fmap_path = dir.join("rgb.fmap");
        let features = FeatureMap::read(&fmap_path).map_err(|e| err(format!("{}: {e}", fmap_path.display())))?;
        if (features.width(), features.height()) != (width, height) {
            return Err(err(format!(
                "feature map is {}x{}, image is {width}x{height}",
                features.width(),
                features.height()
            )));
        }
        let fvec_path = dir.join("rgb.fvec");
        let query = FeatureVector::read(&fvec_path).map_err(|e| err(format!("{}: {e}", fvec_path.display())))?;
        let poses = load_poses(&dir.join("poses.json")).map_err(|e| err(e.to_string()))?;
        let intrinsics = CameraIntrinsics::load(&dir.join("intrinsics.json")).map_err(|e| err(e.to_string()))?;
        let track_path = dir.join("track.json");
        let track = if track_path.exists() { Some(read_json(&track_path).map_err(err)?) } else { None };

        Ok(Self {
            dir: dir.to_path_buf(),
            image_path,
            width,
            height,
            objects,
            features,
            query,
            poses,
            intrinsics,
            track,
        })
    }

    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// The scene after the objects moved by whole pixels `(du, dv)` on the
    /// table plane: masks and features translate, and pose positions move
    /// so their projections translate by the same amount.
    pub fn shifted(&self, du: i64, dv: i64) -> Scene {
        if du == 0 && dv == 0 {
            return self.clone();
        }
        let k = &self.intrinsics;
        let poses = self
            .poses
            .iter()
            .map(|p| {
                let [x, y, z] = p.position;
                GraspPose {
                    position: [x + du as f64 * z / k.fx, y + dv as f64 * z / k.fy, z],
                    ..*p
                }
            })
            .collect();
        Scene {
            objects: self
                .objects
                .iter()
                .map(|o| SceneObject { mask: o.mask.shifted(du, dv), ..o.clone() })
                .collect(),
            features: self.features.shifted(du, dv),
            poses,
            ..self.clone()
        }
    }
}

/// Lowercase alphanumeric tokens.
pub fn tokenize(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TargetError {
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error("scene has no labeled objects")]
    NoObjects,
    #[error("no object label overlaps the instruction {0:?}")]
    NoMatch(String),
}

/// Overlap of label tokens with the instruction: `(shared tokens,
/// fraction of the label covered)`.
fn overlap(label: &str, instruction: &BTreeSet<String>) -> (usize, f64) {
    let tokens = tokenize(label);
    let shared = tokens.intersection(instruction).count();
    let coverage = if tokens.is_empty() { 0.0 } else { shared as f64 / tokens.len() as f64 };
    (shared, coverage)
}

fn mask_centroid(mask: &Mask) -> Pixel {
    let n = mask.count().max(1) as f64;
    let (su, sv) = mask.iter_set().fold((0.0, 0.0), |(a, b), (u, v)| (a + u as f64, b + v as f64));
    Pixel::new(su / n, sv / n)
}

/// Default rule: most shared tokens, then highest label coverage, then
/// lowest id. An external chooser, when given, is asked first; its failure
/// falls back to the default rule.
pub fn select_target(
    scene: &Scene,
    instruction: &str,
    chooser: Option<&dyn Chooser>,
) -> Result<String, TargetError> {
    if instruction.trim().is_empty() {
        return Err(TargetError::EmptyInstruction);
    }
    if scene.objects.is_empty() {
        return Err(TargetError::NoObjects);
    }
    let words = tokenize(instruction);
    if let Some(external) = chooser {
        let request = ChooserRequest {
            image_path: scene.image_path.clone(),
            mask_path: None,
            candidates: scene
                .objects
                .iter()
                .enumerate()
                .map(|(index, o)| {
                    let c = mask_centroid(&o.mask);
                    NumberedCandidate { index, u: c.u, v: c.v, confidence: overlap(&o.label, &words).1 }
                })
                .collect(),
            instruction: Some(instruction.to_string()),
        };
        match external.choose(&request) {
            Ok(r) if r.index < scene.objects.len() => return Ok(scene.objects[r.index].id.clone()),
            Ok(r) => tracing::warn!(index = r.index, "target chooser index out of range; using token overlap"),
            Err(e) => tracing::warn!(error = %e, "target chooser failed; using token overlap"),
        }
    }
    let best = scene
        .objects
        .iter()
        .map(|o| (o, overlap(&o.label, &words)))
        .filter(|(_, (shared, _))| *shared > 0)
        .min_by(|(a, (sa, ca)), (b, (sb, cb))| sb.cmp(sa).then(cb.total_cmp(ca)).then(a.id.cmp(&b.id)));
    best.map(|(o, _)| o.id.clone())
        .ok_or_else(|| TargetError::NoMatch(instruction.to_string()))
}

/// Pipeline parameters. Every field has a default; a JSON config file may
/// set any subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    pub top_k: usize,
    pub radius_px: f64,
    pub patch_half_width: usize,
    pub anisotropy_threshold: f64,
    pub epsilon_px: f64,
    pub max_replans: u32,
    pub seed: u64,
    pub chooser: ChooserConfig,
    pub target_chooser: ChooserConfig,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            top_k: DEFAULT_TOP_K,
            radius_px: DEFAULT_RADIUS_PX,
            patch_half_width: DEFAULT_PATCH_HALF_WIDTH,
            anisotropy_threshold: DEFAULT_ANISOTROPY_THRESHOLD,
            epsilon_px: DEFAULT_EPSILON_PX,
            max_replans: DEFAULT_MAX_REPLANS,
            seed: 0,
            chooser: ChooserConfig::Default,
            target_chooser: ChooserConfig::Default,
        }
    }
}

impl PlanConfig {
    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            epsilon_px: self.epsilon_px,
            max_replans: self.max_replans,
        }
    }
}

/// External choosers built once from a [`PlanConfig`].
#[derive(Default)]
pub struct Choosers {
    pub cog: Option<Box<dyn Chooser>>,
    pub target: Option<Box<dyn Chooser>>,
}

impl Choosers {
    pub fn from_config(config: &PlanConfig) -> Self {
        Self {
            cog: config.chooser.build(),
            target: config.target_chooser.build(),
        }
    }
}

/// Memory bank with access to its exemplar feature maps.
pub struct Memory {
    pub bank: MemoryBank,
    pub source: Arc<dyn FeatureSource>,
}

impl Memory {
    pub fn load(manifest: &Path) -> Result<Self, PlanError> {
        let bank = MemoryBank::load_manifest(manifest).map_err(|e| PlanError::input("load_memory", e))?;
        Ok(Self {
            bank,
            source: Arc::new(crate::memory_bank::FileFeatureSource::default()),
        })
    }
}

/// select_target → retrieve_topk → generate_candidates → select_cog →
/// filter_poses → rotation_correction.
pub fn plan(
    scene: &Scene,
    instruction: &str,
    memory: &Memory,
    config: &PlanConfig,
    choosers: &Choosers,
) -> Result<GraspPlan, PlanError> {
    let target_id = select_target(scene, instruction, choosers.target.as_deref()).map_err(|e| match e {
        TargetError::EmptyInstruction => PlanError::input("select_target", e),
        _ => PlanError::planning("select_target", e),
    })?;
    let target = scene.object(&target_id).expect("selected id exists");

    let query = target.query.as_ref().unwrap_or(&scene.query);
    let retrieved = memory
        .bank
        .retrieve_topk(query, config.top_k)
        .map_err(|e| PlanError::planning("retrieve_topk", e))?;

    let maps: Vec<Result<Arc<FeatureMap>, String>> =
        retrieved.iter().map(|r| memory.source.feature_map(r.entry)).collect();
    let views: Vec<SourceView<'_>> = retrieved
        .iter()
        .zip(&maps)
        .map(|(r, m)| SourceView {
            entry: r.entry,
            map: m.as_ref().map(|m| m.as_ref()).map_err(|e| e.clone()),
        })
        .collect();
    let (candidates, warnings) = generate_candidates(&scene.features, &target.mask, &views)
        .map_err(|e| PlanError::planning("generate_candidates", e))?;

    let context = ChooserContext {
        image_path: scene.image_path.clone(),
        mask_path: Some(target.mask_path.clone()),
    };
    let cog = select_cog(&candidates, &context, choosers.cog.as_deref())
        .map_err(|e| PlanError::planning("select_cog", e))?;

    let mut grasp = filter_poses(&scene.poses, cog.point, &target.mask, &scene.intrinsics, config.radius_px)
        .map_err(|e| PlanError::planning("filter_poses", e))?;
    let (pose, corrected) = rotation_correction(
        &grasp.pose,
        &scene.intrinsics,
        &target.mask,
        grasp.projected,
        config.patch_half_width,
        config.anisotropy_threshold,
    )
    .map_err(|e| PlanError::planning("rotation_correction", e))?;
    grasp.pose = pose;
    grasp.corrected = corrected;

    let retrieved = retrieved
        .iter()
        .map(|r| RetrievedRef { id: r.entry.id.clone(), similarity: r.similarity })
        .collect();
    GraspPlan::new(
        target.id.clone(),
        target.label.clone(),
        retrieved,
        cog,
        grasp,
        &scene.intrinsics,
        warnings,
    )
    .map_err(|e| PlanError::planning("filter_poses", e))
}

/// Closed-loop perception over a scene fixture whose target moves according
/// to its `track.json`.
pub struct ScenePerception<'a> {
    scene: &'a Scene,
    instruction: &'a str,
    memory: &'a Memory,
    config: &'a PlanConfig,
    choosers: &'a Choosers,
    checks: usize,
    planned_shift: (i64, i64),
    /// First failure with its stage name, for reporting.
    pub last_error: Option<PlanError>,
}

impl<'a> ScenePerception<'a> {
    pub fn new(
        scene: &'a Scene,
        instruction: &'a str,
        memory: &'a Memory,
        config: &'a PlanConfig,
        choosers: &'a Choosers,
    ) -> Self {
        Self {
            scene,
            instruction,
            memory,
            config,
            choosers,
            checks: 0,
            planned_shift: (0, 0),
            last_error: None,
        }
    }

    /// Displacement of the tracked point at verification check `i`.
    fn offset(&self, i: usize) -> Option<(f64, f64)> {
        let track = self.scene.track.as_ref()?;
        let Some(p) = track.sequence.get(i).or(track.sequence.last()) else {
            return Some((0.0, 0.0));
        };
        Some((p.u - track.reference.u, p.v - track.reference.v))
    }
}

impl Perception for ScenePerception<'_> {
    fn plan(&mut self) -> Result<GraspPlan, StageFailure> {
        // Re-perception sees the object where the last check found it.
        let (du, dv) = match self.checks {
            0 => (0.0, 0.0),
            n => self.offset(n - 1).unwrap_or((0.0, 0.0)),
        };
        self.planned_shift = (du.round() as i64, dv.round() as i64);
        let scene = self.scene.shifted(self.planned_shift.0, self.planned_shift.1);
        plan(&scene, self.instruction, self.memory, self.config, self.choosers).map_err(|e| {
            let failure = StageFailure { stage: e.loop_stage(), message: e.to_string() };
            self.last_error.get_or_insert(e);
            failure
        })
    }

    fn observe(&mut self, plan: &GraspPlan) -> Option<Observation> {
        let (du, dv) = self.offset(self.checks)?;
        self.checks += 1;
        let (su, sv) = self.planned_shift;
        Some(Observation::Pixel(
            plan.planned_projection.translated(du - su as f64, dv - sv as f64),
        ))
    }
}

/// Plans, verifies against the tracked point and replans until Execute or
/// Failed.
pub fn verify_execute(
    scene: &Scene,
    instruction: &str,
    memory: &Memory,
    config: &PlanConfig,
    choosers: &Choosers,
) -> (LoopOutcome, Option<PlanError>) {
    let mut perception = ScenePerception::new(scene, instruction, memory, config, choosers);
    let outcome = run_closed_loop(&mut perception, &scene.intrinsics, &config.loop_config());
    (outcome, perception.last_error)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildMemorySummary {
    pub entries: usize,
    pub dimension: usize,
    pub categories: BTreeMap<String, usize>,
    pub manifest: PathBuf,
}

fn relative_to(path: &Path, base: &Path) -> PathBuf {
    path.strip_prefix(base).map(Path::to_path_buf).unwrap_or_else(|_| path.to_path_buf())
}

/// Converts an annotated dataset into a memory manifest. Each image's
/// features are expected next to it with `.fvec` / `.fmap` extensions.
/// The written manifest is loaded back to check dimensions and CoG bounds.
pub fn build_memory(dataset_manifest: &Path, out: &Path) -> Result<BuildMemorySummary, PlanError> {
    let err = |m: String| PlanError::input("build_memory", m);
    let dataset = annotation::load_manifest(dataset_manifest).map_err(|e| err(e.to_string()))?;
    let data_dir = dataset_manifest.parent().unwrap_or(Path::new("."));
    let out_dir = out.parent().unwrap_or(Path::new("."));
    let data_abs = fs::canonicalize(data_dir).map_err(|e| err(e.to_string()))?;
    let out_abs = if out_dir.as_os_str().is_empty() { PathBuf::from(".") } else { out_dir.to_path_buf() };
    fs::create_dir_all(&out_abs).map_err(|e| err(e.to_string()))?;
    let out_abs = fs::canonicalize(&out_abs).map_err(|e| err(e.to_string()))?;

    let mut used = BTreeSet::new();
    let mut records = Vec::with_capacity(dataset.entries.len());
    for (i, entry) in dataset.entries.iter().enumerate() {
        let image = data_abs.join(&entry.image_path);
        let stem = entry.image_path.file_stem().and_then(|s| s.to_str()).unwrap_or("entry");
        let mut id = stem.to_string();
        if !used.insert(id.clone()) {
            id = format!("{stem}-{i}");
            used.insert(id.clone());
        }
        records.push(ManifestEntry {
            id,
            category: annotation::normalize_category(&entry.category),
            image_path: relative_to(&image, &out_abs),
            featmap_path: relative_to(&image.with_extension("fmap"), &out_abs),
            fvec_path: relative_to(&image.with_extension("fvec"), &out_abs),
            cog: Pixel::new(entry.annotation.point.x, entry.annotation.point.y),
            source: match entry.annotation.method {
                AnnotationMethod::Suspension => CogSource::Suspension,
                AnnotationMethod::Centroid => CogSource::Centroid,
            },
        });
    }
    let text = serde_json::to_string_pretty(&records).map_err(|e| err(e.to_string()))?;
    fs::write(out, text + "\n").map_err(|e| err(format!("{}: {e}", out.display())))?;
    let bank = MemoryBank::load_manifest(out).map_err(|e| err(e.to_string()))?;
    let mut categories = BTreeMap::new();
    for e in bank.entries() {
        *categories.entry(e.category.clone()).or_insert(0) += 1;
    }
    Ok(BuildMemorySummary {
        entries: bank.len(),
        dimension: bank.dimension().unwrap_or(0),
        categories,
        manifest: out.to_path_buf(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::golden;

    fn scene_with_labels(labels: &[(&str, &str)]) -> Scene {
        let mask = Mask::from_fn(8, 8, |u, v| u < 4 && v < 4);
        Scene {
            dir: PathBuf::new(),
            image_path: PathBuf::new(),
            width: 8,
            height: 8,
            objects: labels
                .iter()
                .map(|(id, label)| SceneObject {
                    id: id.to_string(),
                    label: label.to_string(),
                    mask_path: PathBuf::new(),
                    mask: mask.clone(),
                    query: None,
                })
                .collect(),
            features: FeatureMap::zeros(8, 8, 2).unwrap(),
            query: FeatureVector::normalized(vec![1.0, 0.0]).unwrap(),
            poses: vec![],
            intrinsics: CameraIntrinsics { fx: 1.0, fy: 1.0, cx: 0.0, cy: 0.0 },
            track: None,
        }
    }

    #[test]
    fn target_by_exact_token() {
        let s = scene_with_labels(&[("a", "hammer"), ("b", "cup")]);
        assert_eq!(select_target(&s, "grasp the hammer", None).unwrap(), "a");
    }

    #[test]
    fn target_by_overlap_count() {
        let s = scene_with_labels(&[("a", "adjustable wrench"), ("b", "ratchet wrench")]);
        assert_eq!(select_target(&s, "grasp the ratchet wrench", None).unwrap(), "b");
        assert_eq!(select_target(&s, "Grasp the WRENCH.", None).unwrap(), "a");
    }

    #[test]
    fn target_no_match_and_empty_instruction() {
        let s = scene_with_labels(&[("a", "cup")]);
        assert!(matches!(select_target(&s, "grasp the hammer", None), Err(TargetError::NoMatch(_))));
        assert_eq!(select_target(&s, "  ", None), Err(TargetError::EmptyInstruction));
    }

    #[test]
    fn target_tie_prefers_coverage_then_id() {
        let s = scene_with_labels(&[("b", "hand file"), ("a", "file"), ("c", "file")]);
        assert_eq!(select_target(&s, "the file", None).unwrap(), "a");
    }

    struct Fixed(usize);
    impl Chooser for Fixed {
        fn choose(&self, r: &ChooserRequest) -> Result<crate::cog_locator::ChooserResponse, crate::cog_locator::ChooserError> {
            assert_eq!(r.instruction.as_deref(), Some("pick something"));
            Ok(crate::cog_locator::ChooserResponse { index: self.0 })
        }
    }

    #[test]
    fn external_target_chooser_wins_and_falls_back() {
        let s = scene_with_labels(&[("a", "cup"), ("b", "mug")]);
        assert_eq!(select_target(&s, "pick something", Some(&Fixed(1))).unwrap(), "b");
        assert!(matches!(select_target(&s, "pick something", Some(&Fixed(9))), Err(TargetError::NoMatch(_))));
    }

    fn golden_setup() -> (tempfile::TempDir, crate::synth::GoldenFixture, Scene, Memory) {
        let dir = tempfile::tempdir().unwrap();
        let fx = golden::write(dir.path()).unwrap();
        let scene = Scene::load(&fx.scene_dir).unwrap();
        let memory = Memory::load(&fx.memory_manifest).unwrap();
        (dir, fx, scene, memory)
    }

    #[test]
    fn golden_plan_recovers_planted_answers() {
        let (_d, fx, scene, memory) = golden_setup();
        let config = PlanConfig::default();
        let p = plan(&scene, &fx.instruction, &memory, &config, &Choosers::default()).unwrap();
        assert_eq!(p.target_id, fx.target_id);
        assert_eq!(p.cog.point, fx.planted_cog);
        assert!(p.cog.chosen_from.iter().all(|c| c.point == fx.planted_cog));
        let mut ids: Vec<&str> = p.retrieved.iter().map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        assert_eq!(ids, ["hammer_a", "hammer_b", "hammer_c"]);
        assert_eq!(p.grasp.index, fx.best_pose_index);
        let again = plan(&scene, &fx.instruction, &memory, &config, &Choosers::default()).unwrap();
        assert_eq!(serde_json::to_string(&p).unwrap(), serde_json::to_string(&again).unwrap());
    }

    #[test]
    fn empty_poses_fail_at_filter_stage() {
        let (_d, fx, mut scene, memory) = golden_setup();
        scene.poses.clear();
        let e = plan(&scene, &fx.instruction, &memory, &PlanConfig::default(), &Choosers::default()).unwrap_err();
        assert_eq!(e.stage, "filter_poses");
        assert_eq!(e.class.exit_code(), 2);
    }

    #[test]
    fn missing_scene_file_is_input_error() {
        let (_d, fx, _, _) = golden_setup();
        fs::remove_file(fx.scene_dir.join("intrinsics.json")).unwrap();
        let e = Scene::load(&fx.scene_dir).unwrap_err();
        assert_eq!((e.stage.as_str(), e.class), ("load_scene", ErrorClass::Input));
    }

    #[test]
    fn shifted_scene_moves_plan_by_shift() {
        let (_d, fx, scene, memory) = golden_setup();
        let a = plan(&scene, &fx.instruction, &memory, &PlanConfig::default(), &Choosers::default()).unwrap();
        let b = plan(&scene.shifted(0, 15), &fx.instruction, &memory, &PlanConfig::default(), &Choosers::default()).unwrap();
        assert_eq!(b.cog.point, fx.planted_cog.translated(0.0, 15.0));
        assert_eq!(b.grasp.index, a.grasp.index);
        assert!(b.planned_projection.distance(&a.planned_projection.translated(0.0, 15.0)) < 1e-9);
    }

    fn with_track(scene: &Scene, steps: &[(f64, f64)]) -> Scene {
        let reference = Pixel::new(100.0, 100.0);
        let mut s = scene.clone();
        s.track = Some(Track { reference, sequence: steps.iter().map(|(u, v)| reference.translated(*u, *v)).collect() });
        s
    }

    #[test]
    fn closed_loop_on_golden_scene() {
        let (_d, fx, scene, memory) = golden_setup();
        let config = PlanConfig::default();
        let run = |s: &Scene| verify_execute(s, &fx.instruction, &memory, &config, &Choosers::default()).0;

        let still = run(&with_track(&scene, &[]));
        assert_eq!((still.final_stage, still.replan_count), (Stage::Execute, 0));

        let small = run(&with_track(&scene, &[(3.0, 4.0)]));
        assert_eq!((small.final_stage, small.replan_count), (Stage::Execute, 0));

        let moved = run(&with_track(&scene, &[(0.0, 15.0)]));
        assert_eq!((moved.final_stage, moved.replan_count), (Stage::Execute, 1));
        assert_eq!(moved.plan.unwrap().cog.point, fx.planted_cog.translated(0.0, 15.0));

        let drifting = run(&with_track(&scene, &[(0.0, 10.0), (0.0, 20.0), (0.0, 30.0), (0.0, 40.0), (0.0, 50.0)]));
        assert_eq!((drifting.final_stage, drifting.replan_count), (Stage::Failed, 3));

        let mut untracked = scene.clone();
        untracked.track = None;
        assert_eq!(run(&untracked).final_stage, Stage::Failed);
    }
}
