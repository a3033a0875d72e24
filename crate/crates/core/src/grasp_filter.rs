//! Grasp pose selection against a CoG pixel.
//!
//! Poses are projected with a pinhole model, restricted to the target
//! mask, and ranked lexicographically: inside a pixel radius of the CoG the
//! highest score wins, otherwise the nearest pose does. The chosen pose's
//! in-plane rotation is then corrected so the gripper closes across the
//! local elongation of the mask.
//!
//! The gripper closing axis is the local `y` axis of the pose rotation.

use std::fs;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pixel;
use crate::mask::Mask;

pub const DEFAULT_RADIUS_PX: f64 = 20.0;
pub const DEFAULT_PATCH_HALF_WIDTH: usize = 15;
pub const DEFAULT_ANISOTROPY_THRESHOLD: f64 = 1.5;

#[derive(Debug, Error, PartialEq)]
pub enum GraspError {
    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("no candidate poses")]
    NoPoses,
    #[error("radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("every pose projects outside the target mask or behind the camera")]
    NoValidPose,
    #[error("only {0} mask pixels in the correction patch (need 3)")]
    DegeneratePatch(usize),
    #[error("grasp pixel ({u}, {v}) is not inside the target mask")]
    GraspOutsideMask { u: f64, v: f64 },
    #[error("invalid pose {index}: {reason}")]
    InvalidPose { index: usize, reason: String },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("failed to load {path}: {message}")]
    Load { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), GraspError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GraspError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(GraspError::InvalidIntrinsics("non-finite principal point".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, GraspError> {
        let cam: CameraIntrinsics = load_json(path)?;
        cam.validate()?;
        Ok(cam)
    }

    /// Camera-frame point (meters) at `depth` that projects to `pixel`.
    pub fn back_project(&self, pixel: Pixel, depth: f64) -> [f64; 3] {
        [
            (pixel.u - self.cx) * depth / self.fx,
            (pixel.v - self.cy) * depth / self.fy,
            depth,
        ]
    }
}

pub fn project_point(cam: &CameraIntrinsics, p: [f64; 3]) -> Result<Pixel, GraspError> {
    let [x, y, z] = p;
    if !(z > 0.0) {
        return Err(GraspError::BehindCamera { z });
    }
    Ok(Pixel::new(cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy))
}

/// 6-DOF parallel-jaw grasp in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspPose {
    pub position: [f64; 3],
    /// Unit quaternion `[w, x, y, z]`.
    pub rotation: [f64; 4],
    pub width: f64,
    pub depth: f64,
    pub score: f64,
}

impl GraspPose {
    pub fn validate(&self) -> Result<(), String> {
        let n = self.rotation.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !((n - 1.0).abs() <= 1e-6) {
            return Err(format!("quaternion norm {n} is not 1"));
        }
        if !(self.width >= 0.0 && self.depth >= 0.0) {
            return Err("width and depth must be nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(format!("score {} outside [0, 1]", self.score));
        }
        if self.position.iter().any(|x| !x.is_finite()) {
            return Err("non-finite position".into());
        }
        Ok(())
    }

    pub fn unit_quaternion(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.rotation;
        UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z))
    }

    pub fn with_rotation(mut self, q: UnitQuaternion<f64>) -> Self {
        let q = q.into_inner();
        self.rotation = [q.w, q.i, q.j, q.k];
        self
    }

    /// Camera-frame direction of the gripper closing axis.
    pub fn closing_axis(&self) -> Vector3<f64> {
        self.unit_quaternion() * Vector3::y()
    }
}

/// Loads and validates a candidate-pose JSON array.
pub fn load_poses(path: &Path) -> Result<Vec<GraspPose>, GraspError> {
    let poses: Vec<GraspPose> = load_json(path)?;
    for (index, p) in poses.iter().enumerate() {
        p.validate()
            .map_err(|reason| GraspError::InvalidPose { index, reason })?;
    }
    Ok(poses)
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, GraspError> {
    let load = |message: String| GraspError::Load {
        path: path.display().to_string(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| load(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| load(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectedGrasp {
    pub pose: GraspPose,
    /// Index into the candidate list.
    pub index: usize,
    pub projected: Pixel,
    pub cog_distance: f64,
    pub corrected: bool,
}

/// Picks one pose: inside `radius_px` of the CoG the highest score wins
/// (then nearest, then lowest index); with nobody inside, the nearest wins
/// (then highest score, then lowest index).
pub fn filter_poses(
    poses: &[GraspPose],
    cog: Pixel,
    tgt_mask: &Mask,
    cam: &CameraIntrinsics,
    radius_px: f64,
) -> Result<SelectedGrasp, GraspError> {
    if poses.is_empty() {
        return Err(GraspError::NoPoses);
    }
    if !(radius_px > 0.0) {
        return Err(GraspError::InvalidRadius(radius_px));
    }
    let survivors: Vec<SelectedGrasp> = poses
        .iter()
        .enumerate()
        .filter_map(|(index, pose)| {
            let projected = project_point(cam, pose.position).ok()?;
            tgt_mask.contains(&projected).then(|| SelectedGrasp {
                pose: *pose,
                index,
                projected,
                cog_distance: projected.distance(&cog),
                corrected: false,
            })
        })
        .collect();
    let within = survivors.iter().filter(|s| s.cog_distance <= radius_px);
    let best = within
        .min_by(|a, b| {
            b.pose
                .score
                .total_cmp(&a.pose.score)
                .then(a.cog_distance.total_cmp(&b.cog_distance))
                .then(a.index.cmp(&b.index))
        })
        .or_else(|| {
            survivors.iter().min_by(|a, b| {
                a.cog_distance
                    .total_cmp(&b.cog_distance)
                    .then(b.pose.score.total_cmp(&a.pose.score))
                    .then(a.index.cmp(&b.index))
            })
        });
    best.copied().ok_or(GraspError::NoValidPose)
}

/// Second moments of the mask pixels in a square patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchMoments {
    pub count: usize,
    pub cov_uu: f64,
    pub cov_uv: f64,
    pub cov_vv: f64,
}

impl PatchMoments {
    pub fn compute(mask: &Mask, center: (usize, usize), half_width: usize) -> Self {
        let (cu, cv) = center;
        let u_range = cu.saturating_sub(half_width)..=(cu + half_width).min(mask.width() - 1);
        let v_range = cv.saturating_sub(half_width)..=(cv + half_width).min(mask.height() - 1);
        let mut pts = Vec::new();
        for v in v_range {
            for u in u_range.clone() {
                if mask.get(u, v) {
                    pts.push((u as f64, v as f64));
                }
            }
        }
        let n = pts.len() as f64;
        let (mu, mv) = pts
            .iter()
            .fold((0.0, 0.0), |(a, b), (u, v)| (a + u / n, b + v / n));
        let (mut uu, mut uv, mut vv) = (0.0, 0.0, 0.0);
        for (u, v) in &pts {
            let (du, dv) = (u - mu, v - mv);
            uu += du * du;
            uv += du * dv;
            vv += dv * dv;
        }
        Self {
            count: pts.len(),
            cov_uu: uu / n,
            cov_uv: uv / n,
            cov_vv: vv / n,
        }
    }

    /// `(lambda_max, lambda_min)`.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.cov_uu + self.cov_vv);
        let r = (0.5 * (self.cov_uu - self.cov_vv)).hypot(self.cov_uv);
        (mean + r, (mean - r).max(0.0))
    }

    /// Unit image direction of the minor principal axis.
    pub fn minor_axis(&self) -> (f64, f64) {
        let major = 0.5 * (2.0 * self.cov_uv).atan2(self.cov_uu - self.cov_vv);
        (-major.sin(), major.cos())
    }

    pub fn anisotropy(&self) -> f64 {
        let (hi, lo) = self.eigenvalues();
        if lo <= hi * 1e-12 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }
}

/// Image-plane direction of a small displacement along `axis` at `p`.
fn projected_direction(cam: &CameraIntrinsics, p: [f64; 3], axis: Vector3<f64>) -> (f64, f64) {
    let [x, y, z] = p;
    (
        cam.fx * (axis.x * z - x * axis.z) / (z * z),
        cam.fy * (axis.y * z - y * axis.z) / (z * z),
    )
}

/// Rotates the pose about the camera optical axis so its closing axis
/// projects along the minor principal axis of the local mask patch.
/// Returns the pose and whether it was changed.
pub fn rotation_correction(
    pose: &GraspPose,
    cam: &CameraIntrinsics,
    tgt_mask: &Mask,
    grasp_pixel: Pixel,
    patch_half_width: usize,
    anisotropy_threshold: f64,
) -> Result<(GraspPose, bool), GraspError> {
    let center = grasp_pixel
        .to_index(tgt_mask.width(), tgt_mask.height())
        .filter(|&(u, v)| tgt_mask.get(u, v))
        .ok_or(GraspError::GraspOutsideMask {
            u: grasp_pixel.u,
            v: grasp_pixel.v,
        })?;
    let moments = PatchMoments::compute(tgt_mask, center, patch_half_width);
    if moments.count < 3 {
        return Err(GraspError::DegeneratePatch(moments.count));
    }
    if moments.anisotropy() < anisotropy_threshold {
        return Ok((*pose, false));
    }
    let (mu, mv) = moments.minor_axis();
    let cross_m = |(a, b): (f64, f64)| a * mv - b * mu;

    let axis = pose.closing_axis();
    let p = pose.position;
    if !(p[2] > 0.0) {
        return Err(GraspError::BehindCamera { z: p[2] });
    }
    // proj(phi) = cos(phi) P + sin(phi) Q + K; solve cross(proj, m) = 0.
    let big_p = projected_direction(cam, p, Vector3::new(axis.x, axis.y, 0.0));
    let big_q = projected_direction(cam, p, Vector3::new(-axis.y, axis.x, 0.0));
    let big_k = projected_direction(cam, p, Vector3::new(0.0, 0.0, axis.z));
    let (a, b, c) = (cross_m(big_p), cross_m(big_q), cross_m(big_k));
    let r = a.hypot(b);
    if r < 1e-12 || c.abs() > r {
        // Closing axis (nearly) along the optical axis: no in-plane fix.
        return Ok((*pose, false));
    }
    let delta = b.atan2(a);
    let spread = (-c / r).clamp(-1.0, 1.0).acos();
    let phi = [delta + spread, delta - spread]
        .into_iter()
        .map(wrap_angle)
        .filter(|&phi| {
            let (s, co) = phi.sin_cos();
            let du = co * big_p.0 + s * big_q.0 + big_k.0;
            let dv = co * big_p.1 + s * big_q.1 + big_k.1;
            du.hypot(dv) > 1e-9
        })
        .min_by(|x, y| x.abs().total_cmp(&y.abs()));
    let Some(phi) = phi else {
        return Ok((*pose, false));
    };
    let spin = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), phi);
    Ok((pose.with_rotation(spin * pose.unit_quaternion()), true))
}

fn wrap_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let w = (a + std::f64::consts::PI).rem_euclid(tau) - std::f64::consts::PI;
    if w <= -std::f64::consts::PI {
        w + tau
    } else {
        w
    }
}

/// Sign-invariant quaternion distance `min(|q1 - q2|, |q1 + q2|)`.
pub fn quaternion_distance(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let minus: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let plus: f64 = a.iter().zip(b).map(|(x, y)| (x + y).powi(2)).sum::<f64>().sqrt();
    minus.min(plus)
}

/// Angle in degrees, modulo 180, of the closing axis's image projection.
pub fn closing_axis_image_angle(pose: &GraspPose, cam: &CameraIntrinsics) -> f64 {
    let (du, dv) = projected_direction(cam, pose.position, pose.closing_axis());
    dv.atan2(du).to_degrees().rem_euclid(180.0)
}
