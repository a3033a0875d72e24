//! Synthetic scenes: a top-down pinhole camera over a table, planar rigid
//! objects rendered into masks, dense per-pixel features, global descriptors
//! and candidate grasp poses sampled on the object.
//!
//! Dense features depend only on the object-frame position of a pixel
//! (normalized length coordinate, cross coordinate and part role), so the
//! same physical point on two instances of a category carries similar
//! features regardless of placement.

use std::f64::consts::PI;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::features::{write_fvec, FeatureMap};
use crate::geometry::{Pixel, Point2};
use crate::grasp_filter::{CameraIntrinsics, GraspPose};
use crate::mask::Mask;
use crate::stability_sim::{true_cog, PartRole, RigidObjectModel};

/// Channels of the dense per-pixel features.
pub const FEATURE_DEPTH: usize = 16;
/// Reserved channel, zero in rendered features; fixtures use it to plant
/// unique vectors.
pub const RESERVED_CHANNEL: usize = FEATURE_DEPTH - 1;
/// Length of the global image descriptor.
pub const DESCRIPTOR_DIM: usize = 24;

/// Camera looking straight down at a table at fixed depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableCamera {
    pub intrinsics: CameraIntrinsics,
    pub width: usize,
    pub height: usize,
    /// Table depth along the optical axis, meters.
    pub depth: f64,
}

impl Default for TableCamera {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics {
                fx: 300.0,
                fy: 300.0,
                cx: 128.0,
                cy: 128.0,
            },
            width: 256,
            height: 256,
            depth: 0.6,
        }
    }
}

impl TableCamera {
    /// Camera-frame position of an object-frame point.
    pub fn to_camera(&self, placement: &Placement, p: Point2) -> [f64; 3] {
        let r = p.rotated(placement.angle);
        [r.x + placement.offset.x, r.y + placement.offset.y, self.depth]
    }

    pub fn to_pixel(&self, placement: &Placement, p: Point2) -> Pixel {
        let [x, y, z] = self.to_camera(placement, p);
        let k = &self.intrinsics;
        Pixel::new(k.fx * x / z + k.cx, k.fy * y / z + k.cy)
    }

    /// Object-frame point seen at `pixel` on the table plane.
    pub fn to_object(&self, placement: &Placement, pixel: Pixel) -> Point2 {
        let k = &self.intrinsics;
        let x = (pixel.u - k.cx) * self.depth / k.fx;
        let y = (pixel.v - k.cy) * self.depth / k.fy;
        Point2::new(x - placement.offset.x, y - placement.offset.y).rotated(-placement.angle)
    }

    /// Pixels per meter on the table plane (horizontal).
    pub fn scale(&self) -> f64 {
        self.intrinsics.fx / self.depth
    }
}

/// Rigid placement of the object frame on the table: rotate, then offset
/// (meters, camera x/y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub offset: Point2,
    pub angle: f64,
}

impl Placement {
    /// Places the model with its bounding-box center at the optical axis.
    pub fn centered(model: &RigidObjectModel, angle: f64) -> Self {
        let (lo, hi) = model.bounds();
        let c = Point2::new((lo.x + hi.x) / 2.0, (lo.y + hi.y) / 2.0).rotated(angle);
        Self {
            offset: Point2::new(-c.x, -c.y),
            angle,
        }
    }

    pub fn translated(self, dx: f64, dy: f64) -> Self {
        Self {
            offset: Point2::new(self.offset.x + dx, self.offset.y + dy),
            ..self
        }
    }
}

/// Pixels whose centers fall on the object.
pub fn render_mask(model: &RigidObjectModel, placement: &Placement, cam: &TableCamera) -> Mask {
    Mask::from_fn(cam.width, cam.height, |u, v| {
        model.contains(cam.to_object(placement, Pixel::new(u as f64, v as f64)))
    })
}

/// Normalization of object-frame coordinates used by the features.
#[derive(Debug, Clone, Copy)]
struct ObjectFrame {
    x0: f64,
    length: f64,
    half_height: f64,
}

impl ObjectFrame {
    fn new(model: &RigidObjectModel) -> Self {
        let (lo, hi) = model.bounds();
        Self {
            x0: lo.x,
            length: (hi.x - lo.x).max(1e-9),
            half_height: lo.y.abs().max(hi.y.abs()).max(1e-9),
        }
    }
}

/// Dense feature of an on-object point; zero off the object.
pub fn point_feature(model: &RigidObjectModel, p: Point2) -> [f32; FEATURE_DEPTH] {
    let mut f = [0.0f32; FEATURE_DEPTH];
    let Some(part) = model.parts.iter().find(|part| part.shape.contains(p)) else {
        return f;
    };
    let frame = ObjectFrame::new(model);
    let t = (p.x - frame.x0) / frame.length;
    let s = p.y / frame.half_height;
    for k in 1..=3 {
        let w = 1.0 / k as f64;
        f[2 * (k - 1)] = (w * (k as f64 * PI * t).cos()) as f32;
        f[2 * (k - 1) + 1] = (w * (k as f64 * PI * t).sin()) as f32;
    }
    f[6] = (0.4 * s) as f32;
    f[7] = (0.2 * s.abs()) as f32;
    match part.role {
        PartRole::Grip => f[8] = 0.3,
        PartRole::Body => f[9] = 0.3,
    }
    f
}

/// Renders the dense feature map of a placed object.
pub fn render_features(model: &RigidObjectModel, placement: &Placement, cam: &TableCamera) -> FeatureMap {
    let mut map = FeatureMap::zeros(cam.height, cam.width, FEATURE_DEPTH).expect("nonzero depth");
    for v in 0..cam.height {
        for u in 0..cam.width {
            let p = cam.to_object(placement, Pixel::new(u as f64, v as f64));
            if model.contains(p) {
                map.pixel_mut(u, v).copy_from_slice(&point_feature(model, p));
            }
        }
    }
    map
}

/// Global appearance descriptor: a category one-hot plus shape and material
/// cues, with small isotropic noise.
pub fn global_descriptor(
    category_index: usize,
    model: &RigidObjectModel,
    noise: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let mut d = vec![0.0; DESCRIPTOR_DIM];
    if category_index < 10 {
        d[category_index] = 1.0;
    }
    let (lo, hi) = model.bounds();
    let area: f64 = model.parts.iter().map(|p| p.shape.area()).sum();
    let body = |f: &dyn Fn(&crate::stability_sim::Part) -> f64| -> f64 {
        model
            .parts
            .iter()
            .filter(|p| p.role == PartRole::Body)
            .map(f)
            .sum()
    };
    let cues = [
        (hi.x - lo.x) / 0.4,
        (hi.y - lo.y) / 0.1,
        body(&|p| p.shape.area()) / area,
        body(&|p| p.mass) / model.total_mass(),
        (true_cog(model).x - lo.x) / (hi.x - lo.x).max(1e-9),
    ];
    for (i, c) in cues.iter().enumerate() {
        d[10 + i] = 0.5 * c;
    }
    let normal = Normal::new(0.0, noise.max(0.0)).expect("finite std");
    for x in d.iter_mut() {
        *x += normal.sample(rng);
    }
    d
}

/// Top-down grasp with the closing axis at `angle` in the image plane.
pub fn top_down_rotation(angle: f64) -> UnitQuaternion<f64> {
    let (s, c) = angle.sin_cos();
    // Columns: approach (local x) along +z, closing (local y) in-plane.
    let m = Matrix3::new(0.0, c, -s, 0.0, s, c, 1.0, 0.0, 0.0);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
}

/// Samples `n` candidate poses on the object, each closing across the part
/// it lies on (with angular jitter) and carrying a uniform random score.
pub fn sample_poses(
    model: &RigidObjectModel,
    placement: &Placement,
    cam: &TableCamera,
    n: usize,
    rng: &mut impl Rng,
) -> Vec<GraspPose> {
    let total: f64 = model.parts.iter().map(|p| p.shape.area()).sum();
    (0..n)
        .map(|_| {
            let mut pick = rng.random_range(0.0..total);
            let part = model
                .parts
                .iter()
                .find(|p| {
                    pick -= p.shape.area();
                    pick < 0.0
                })
                .unwrap_or_else(|| model.parts.last().expect("validated model"));
            let a = rng.random_range(-0.9..0.9);
            let b = rng.random_range(-0.9..0.9);
            let p = part.shape.point_at(a, b);
            let jitter = rng.random_range(-0.25..0.25);
            let angle = placement.angle + part.shape.angle + PI / 2.0 + jitter;
            GraspPose {
                position: cam.to_camera(placement, p),
                rotation: [1.0, 0.0, 0.0, 0.0],
                width: rng.random_range(0.04..0.08),
                depth: 0.02,
                score: rng.random_range(0.05..1.0),
            }
            .with_rotation(top_down_rotation(angle))
        })
        .collect()
}

/// Simple grayscale rendering of masks (objects light, table dark).
pub fn render_image(masks: &[&Mask], width: usize, height: usize) -> image::GrayImage {
    image::GrayImage::from_fn(width as u32, height as u32, |u, v| {
        let on = masks.iter().any(|m| m.get(u as usize, v as usize));
        image::Luma([if on { 200 } else { 40 }])
    })
}

/// On-disk scene fixture description, as written to `labels.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledMask {
    pub id: String,
    pub label: String,
    pub mask_path: PathBuf,
}

/// Tracked reference point of the target across verification checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub reference: Pixel,
    #[serde(default)]
    pub sequence: Vec<Pixel>,
}

/// Paths and known answers of a generated golden fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenFixture {
    pub scene_dir: PathBuf,
    pub memory_manifest: PathBuf,
    pub instruction: String,
    pub target_id: String,
    /// Pixel every retrieved exemplar maps onto.
    pub planted_cog: Pixel,
    /// Index in `poses.json` of the pose the filter must select.
    pub best_pose_index: usize,
}

pub mod golden {
    //! A two-object scene (hammer and cup) with a three-exemplar memory in
    //! which every stage has a unique correct answer.

    use super::*;
    use crate::memory_bank::{CogSource, ManifestEntry};
    use crate::stability_sim::{reference_hammer, Part, Rect};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub const INSTRUCTION: &str = "grasp the hammer";
    pub const TARGET_ID: &str = "obj_0";
    const CUP_ID: &str = "obj_1";
    const SEED: u64 = 0x6f6c_6465_6e00;

    fn cup() -> RigidObjectModel {
        RigidObjectModel::new(vec![Part {
            shape: Rect::axis_aligned(Point2::new(0.0, 0.0), [0.04, 0.04]),
            mass: 0.3,
            role: PartRole::Body,
        }])
        .expect("valid cup")
    }

    fn io_err(e: impl std::fmt::Display) -> io::Error {
        io::Error::other(e.to_string())
    }

    fn write_json(path: &Path, value: &impl Serialize) -> io::Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(io_err)?;
        fs::write(path, text + "\n")
    }

    /// Writes the scene under `root/scene` and the memory under
    /// `root/memory`. Output depends only on the constants in this module.
    pub fn write(root: &Path) -> io::Result<GoldenFixture> {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let cam = TableCamera::default();
        let scene_dir = root.join("scene");
        let memory_dir = root.join("memory");
        fs::create_dir_all(scene_dir.join("masks"))?;
        fs::create_dir_all(memory_dir.join("exemplars"))?;

        // Scene: hammer on the left, cup on the right.
        let hammer = reference_hammer();
        let hammer_at = Placement::centered(&hammer, 0.0).translated(0.0, -0.1);
        let cup_model = cup();
        let cup_at = Placement::centered(&cup_model, 0.0).translated(0.12, 0.12);
        let hammer_mask = render_mask(&hammer, &hammer_at, &cam);
        let cup_mask = render_mask(&cup_model, &cup_at, &cam);

        let cog = true_cog(&hammer);
        let projected = cam.to_pixel(&hammer_at, cog);
        let planted = Pixel::new(projected.u.round(), projected.v.round());
        let (pu, pv) = planted.to_index(cam.width, cam.height).expect("cog in view");
        assert!(hammer_mask.get(pu, pv), "planted pixel on the hammer");

        let mut fmap = render_features(&hammer, &hammer_at, &cam);
        let cup_features = render_features(&cup_model, &cup_at, &cam);
        for (u, v) in cup_mask.iter_set() {
            fmap.pixel_mut(u, v).copy_from_slice(cup_features.pixel(u, v));
        }
        plant(&mut fmap, pu, pv);
        fmap.write(&scene_dir.join("rgb.fmap")).map_err(io_err)?;
        let query = global_descriptor(0, &hammer, 0.0, &mut rng);
        write_fvec(&scene_dir.join("rgb.fvec"), &to_f32(&query)).map_err(io_err)?;
        render_image(&[&hammer_mask, &cup_mask], cam.width, cam.height)
            .save(scene_dir.join("rgb.png"))
            .map_err(io_err)?;
        hammer_mask.save_png(&scene_dir.join("masks/obj_0.png")).map_err(io_err)?;
        cup_mask.save_png(&scene_dir.join("masks/obj_1.png")).map_err(io_err)?;
        write_json(
            &scene_dir.join("labels.json"),
            &vec![
                LabeledMask { id: TARGET_ID.into(), label: "hammer".into(), mask_path: "masks/obj_0.png".into() },
                LabeledMask { id: CUP_ID.into(), label: "cup".into(), mask_path: "masks/obj_1.png".into() },
            ],
        )?;
        write_json(&scene_dir.join("intrinsics.json"), &cam.intrinsics)?;

        // Poses: random hammer poses with scores below the designated best,
        // which sits near the planted CoG, plus tempting cup poses that the
        // mask must reject.
        let mut poses = sample_poses(&hammer, &hammer_at, &cam, 24, &mut rng);
        for p in &mut poses {
            p.score *= 0.8;
        }
        let best_point = cam.to_object(&hammer_at, planted.translated(6.0, 2.0));
        let best = GraspPose {
            position: cam.to_camera(&hammer_at, best_point),
            score: 0.9,
            ..poses[0]
        };
        let best_pose_index = 7;
        poses.insert(best_pose_index, best);
        for mut p in sample_poses(&cup_model, &cup_at, &cam, 4, &mut rng) {
            p.score = 0.99;
            poses.push(p);
        }
        write_json(&scene_dir.join("poses.json"), &poses)?;
        write_json(&scene_dir.join("track.json"), &Track { reference: planted, sequence: vec![] })?;

        // Memory: three hammer-like exemplars whose annotated CoG carries the
        // planted vector, plus distractor categories.
        let mut manifest = Vec::new();
        let exemplars: [(&str, &str, usize, f64, f64); 5] = [
            ("hammer_a", "hammer", 0, 1.00, 0.0),
            ("hammer_b", "hammer", 0, 0.85, 0.06),
            ("hammer_c", "hammer", 0, 1.20, -0.04),
            ("screwdriver_a", "screwdriver", 7, 1.0, 0.02),
            ("chisel_a", "chisel", 9, 1.0, 0.0),
        ];
        let ex_cam = TableCamera { width: 224, height: 96, intrinsics: CameraIntrinsics { fx: 300.0, fy: 300.0, cx: 112.0, cy: 48.0 }, depth: 0.6 };
        for (id, category, cat_index, head_scale, angle) in exemplars {
            let model = scaled_head(&hammer, head_scale);
            let at = Placement::centered(&model, angle);
            let mut map = render_features(&model, &at, &ex_cam);
            let c = ex_cam.to_pixel(&at, true_cog(&model));
            let cog = Pixel::new(c.u.round(), c.v.round());
            let (cu, cv) = cog.to_index(ex_cam.width, ex_cam.height).expect("cog in exemplar view");
            if category == "hammer" {
                plant(&mut map, cu, cv);
            }
            let mask = render_mask(&model, &at, &ex_cam);
            let base = memory_dir.join("exemplars");
            map.write(&base.join(format!("{id}.fmap"))).map_err(io_err)?;
            let noise = if category == "hammer" { 0.01 } else { 0.0 };
            let fvec = global_descriptor(cat_index, &model, noise, &mut rng);
            write_fvec(&base.join(format!("{id}.fvec")), &to_f32(&fvec)).map_err(io_err)?;
            render_image(&[&mask], ex_cam.width, ex_cam.height)
                .save(base.join(format!("{id}.png")))
                .map_err(io_err)?;
            manifest.push(ManifestEntry {
                id: id.into(),
                category: category.into(),
                image_path: format!("exemplars/{id}.png").into(),
                featmap_path: format!("exemplars/{id}.fmap").into(),
                fvec_path: format!("exemplars/{id}.fvec").into(),
                cog,
                source: CogSource::Suspension,
            });
        }
        let memory_manifest = memory_dir.join("manifest.json");
        write_json(&memory_manifest, &manifest)?;

        Ok(GoldenFixture {
            scene_dir,
            memory_manifest,
            instruction: INSTRUCTION.into(),
            target_id: TARGET_ID.into(),
            planted_cog: planted,
            best_pose_index,
        })
    }

    fn plant(map: &mut FeatureMap, u: usize, v: usize) {
        let px = map.pixel_mut(u, v);
        px.fill(0.0);
        px[RESERVED_CHANNEL] = 1.0;
    }

    fn scaled_head(model: &RigidObjectModel, scale: f64) -> RigidObjectModel {
        let mut m = model.clone();
        if let Some(head) = m.parts.iter_mut().find(|p| p.role == PartRole::Body) {
            head.mass *= scale;
        }
        m
    }
}

pub(crate) fn to_f32(values: &[f64]) -> Vec<f32> {
    values.iter().map(|&x| x as f32).collect()
}
