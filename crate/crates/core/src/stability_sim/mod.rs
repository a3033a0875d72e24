//! Planar rigid-body stability oracle.
//!
//! Objects are unions of rectangles with per-part mass. A parallel-jaw grasp
//! lifts the object against gravity (along `-y` of the object frame); the
//! grasp holds when friction can carry the weight and the gripper can resist
//! the gravity torque about the grasp point.

mod bench;
mod family;

pub use bench::{
    run_benchmark, BenchConfig, BenchmarkResults, CellResult, Policy, TrialRecord,
};
pub use family::{CategorySpec, PartLayout, ToolFamily, ToolInstance};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;

pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("object has no parts")]
    NoParts,
    #[error("part {0} has non-positive mass or extent")]
    InvalidPart(usize),
    #[error("grasp point ({x}, {y}) is not on the object")]
    GraspOffObject { x: f64, y: f64 },
    #[error("invalid gripper parameters: {0}")]
    InvalidGripper(String),
    #[error("invalid tool family: {0}")]
    InvalidFamily(String),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("benchmark needs at least one policy")]
    NoPolicies,
    #[error("trial {trial}: {message}")]
    Trial { trial: usize, message: String },
}

/// Oriented rectangle in the object frame (meters, radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub center: Point2,
    pub half_extents: [f64; 2],
    #[serde(default)]
    pub angle: f64,
}

impl Rect {
    pub fn axis_aligned(center: Point2, half_extents: [f64; 2]) -> Self {
        Self {
            center,
            half_extents,
            angle: 0.0,
        }
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_extents[0] * self.half_extents[1]
    }

    /// Point expressed in the rectangle's own axes, relative to its center.
    fn local(&self, p: Point2) -> Point2 {
        Point2::new(p.x - self.center.x, p.y - self.center.y).rotated(-self.angle)
    }

    pub fn contains(&self, p: Point2) -> bool {
        let l = self.local(p);
        l.x.abs() <= self.half_extents[0] && l.y.abs() <= self.half_extents[1]
    }

    /// Maps `(a, b)` in `[-1, 1]^2` onto the rectangle.
    pub fn point_at(&self, a: f64, b: f64) -> Point2 {
        let l = Point2::new(a * self.half_extents[0], b * self.half_extents[1]).rotated(self.angle);
        Point2::new(self.center.x + l.x, self.center.y + l.y)
    }

    pub fn corners(&self) -> [Point2; 4] {
        [
            self.point_at(-1.0, -1.0),
            self.point_at(1.0, -1.0),
            self.point_at(1.0, 1.0),
            self.point_at(-1.0, 1.0),
        ]
    }

    /// Closest point of the rectangle to `p`.
    pub fn clamp(&self, p: Point2) -> Point2 {
        let l = self.local(p);
        self.point_at(
            (l.x / self.half_extents[0]).clamp(-1.0, 1.0),
            (l.y / self.half_extents[1]).clamp(-1.0, 1.0),
        )
    }
}

/// Affordance role of a part: `Grip` is where a human would hold the tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PartRole {
    Grip,
    #[default]
    Body,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub shape: Rect,
    pub mass: f64,
    #[serde(default)]
    pub role: PartRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidObjectModel {
    pub parts: Vec<Part>,
}

impl RigidObjectModel {
    pub fn new(parts: Vec<Part>) -> Result<Self, SimError> {
        let model = Self { parts };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.parts.is_empty() {
            return Err(SimError::NoParts);
        }
        for (i, p) in self.parts.iter().enumerate() {
            let ok = p.mass > 0.0
                && p.mass.is_finite()
                && p.shape.half_extents.iter().all(|h| *h > 0.0 && h.is_finite());
            if !ok {
                return Err(SimError::InvalidPart(i));
            }
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.parts.iter().map(|p| p.mass).sum()
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.parts.iter().any(|part| part.shape.contains(p))
    }

    /// `(min, max)` corners of the axis-aligned bounding box.
    pub fn bounds(&self) -> (Point2, Point2) {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in self.parts.iter().flat_map(|p| p.shape.corners()) {
            lo = Point2::new(lo.x.min(c.x), lo.y.min(c.y));
            hi = Point2::new(hi.x.max(c.x), hi.y.max(c.y));
        }
        (lo, hi)
    }

    /// Rigid motion: rotate about the origin, then translate.
    pub fn transformed(&self, angle: f64, offset: Point2) -> Self {
        let parts = self
            .parts
            .iter()
            .map(|p| {
                let c = p.shape.center.rotated(angle);
                Part {
                    shape: Rect {
                        center: Point2::new(c.x + offset.x, c.y + offset.y),
                        half_extents: p.shape.half_extents,
                        angle: p.shape.angle + angle,
                    },
                    ..*p
                }
            })
            .collect();
        Self { parts }
    }

    /// On-object point closest to `target`.
    pub fn nearest_point(&self, target: Point2) -> Point2 {
        self.parts
            .iter()
            .map(|p| p.shape.clamp(target))
            .min_by(|a, b| a.distance(&target).total_cmp(&b.distance(&target)))
            .expect("validated model has parts")
    }
}

/// Mass-weighted average of part centroids.
pub fn true_cog(model: &RigidObjectModel) -> Point2 {
    let m = model.total_mass();
    let (sx, sy) = model.parts.iter().fold((0.0, 0.0), |(sx, sy), p| {
        (sx + p.mass * p.shape.center.x, sy + p.mass * p.shape.center.y)
    });
    Point2::new(sx / m, sy / m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperParams {
    /// Newtons.
    pub max_normal_force: f64,
    pub friction: f64,
    /// Newton-meters.
    pub torque_capacity: f64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
}

fn default_gravity() -> f64 {
    STANDARD_GRAVITY
}

impl GripperParams {
    /// Calibrated so the two-part reference hammer (0.2 kg handle, 1.0 kg
    /// head) slips when held at the handle end but lifts at its CoG, and so
    /// handle grasps of head-heavy tools in the default family slip.
    pub fn calibrated() -> Self {
        Self {
            max_normal_force: 15.0,
            friction: 0.5,
            torque_capacity: 0.1,
            gravity: STANDARD_GRAVITY,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ok = [self.max_normal_force, self.friction, self.torque_capacity, self.gravity]
            .iter()
            .all(|x| *x > 0.0 && x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidGripper(format!("{self:?}")))
        }
    }
}

impl Default for GripperParams {
    fn default() -> Self {
        Self::calibrated()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeKind {
    Lifted,
    SlipRotation,
    TooHeavy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspOutcome {
    pub kind: OutcomeKind,
    pub required_torque: f64,
    pub required_force: f64,
}

impl GraspOutcome {
    pub fn success(&self) -> bool {
        self.kind == OutcomeKind::Lifted
    }
}

/// Adjudicates a vertical parallel-jaw lift at `grasp_point`. Exactly
/// reaching a capacity counts as success.
pub fn grasp_outcome(
    model: &RigidObjectModel,
    grasp_point: Point2,
    gripper: &GripperParams,
) -> Result<GraspOutcome, SimError> {
    if !model.contains(grasp_point) {
        return Err(SimError::GraspOffObject {
            x: grasp_point.x,
            y: grasp_point.y,
        });
    }
    let weight = model.total_mass() * gripper.gravity;
    let lever = (true_cog(model).x - grasp_point.x).abs();
    let required_torque = weight * lever;
    let kind = if weight > 2.0 * gripper.friction * gripper.max_normal_force {
        OutcomeKind::TooHeavy
    } else if required_torque > gripper.torque_capacity {
        OutcomeKind::SlipRotation
    } else {
        OutcomeKind::Lifted
    };
    Ok(GraspOutcome {
        kind,
        required_torque,
        required_force: weight,
    })
}

/// The two-part hammer used throughout the docs and tests: a 0.2 kg handle
/// centered at (0.15, 0) and a 1.0 kg head centered at (0.35, 0).
pub fn reference_hammer() -> RigidObjectModel {
    RigidObjectModel::new(vec![
        Part {
            shape: Rect::axis_aligned(Point2::new(0.15, 0.0), [0.15, 0.015]),
            mass: 0.2,
            role: PartRole::Grip,
        },
        Part {
            shape: Rect::axis_aligned(Point2::new(0.35, 0.0), [0.05, 0.04]),
            mass: 1.0,
            role: PartRole::Body,
        },
    ])
    .expect("reference hammer is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rod() -> RigidObjectModel {
        RigidObjectModel::new(vec![Part {
            shape: Rect::axis_aligned(Point2::new(0.15, 0.0), [0.15, 0.01]),
            mass: 0.3,
            role: PartRole::Grip,
        }])
        .unwrap()
    }

    #[test]
    fn single_part_cog() {
        assert_eq!(true_cog(&rod()), Point2::new(0.15, 0.0));
    }

    #[test]
    fn hammer_cog() {
        // (0.2 * 0.15 + 1.0 * 0.35) / 1.2
        let c = true_cog(&reference_hammer());
        assert!((c.x - 0.38 / 1.2).abs() < 1e-9);
        assert!((c.x - 0.31667).abs() < 1e-5);
        assert_eq!(c.y, 0.0);
    }

    #[test]
    fn hammer_outcomes() {
        let h = reference_hammer();
        let g = GripperParams { max_normal_force: 20.0, friction: 0.5, torque_capacity: 1.0, gravity: 9.81 };
        let at_end = grasp_outcome(&h, Point2::new(0.0, 0.0), &g).unwrap();
        assert_eq!(at_end.kind, OutcomeKind::SlipRotation);
        assert!((at_end.required_torque - 1.2 * 9.81 * (0.38 / 1.2)).abs() < 1e-12);
        assert!((at_end.required_torque - 3.7278).abs() < 1e-3);
        let at_cog = grasp_outcome(&h, true_cog(&h), &g).unwrap();
        assert_eq!(at_cog.kind, OutcomeKind::Lifted);
        assert_eq!(at_cog.required_torque, 0.0);
    }

    #[test]
    fn too_heavy() {
        let g = GripperParams { max_normal_force: 4.0, friction: 0.5, torque_capacity: 10.0, gravity: 9.81 };
        let out = grasp_outcome(&reference_hammer(), Point2::new(0.3, 0.0), &g).unwrap();
        assert_eq!(out.kind, OutcomeKind::TooHeavy);
        assert!((out.required_force - 11.772).abs() < 1e-9);
    }

    #[test]
    fn boundaries_count_as_success() {
        let h = reference_hammer();
        let w = h.total_mass() * 9.81;
        let g = GripperParams { max_normal_force: w, friction: 0.5, torque_capacity: w * 0.1, gravity: 9.81 };
        let x = true_cog(&h).x - 0.1;
        let out = grasp_outcome(&h, Point2::new(x, 0.0), &g).unwrap();
        assert!(out.required_torque <= g.torque_capacity * (1.0 + 1e-12));
        let exact = GripperParams { torque_capacity: out.required_torque, ..g };
        assert_eq!(grasp_outcome(&h, Point2::new(x, 0.0), &exact).unwrap().kind, OutcomeKind::Lifted);
    }

    #[test]
    fn calibrated_gripper_on_reference_hammer() {
        let h = reference_hammer();
        let g = GripperParams::calibrated();
        assert_eq!(grasp_outcome(&h, Point2::new(0.0, 0.0), &g).unwrap().kind, OutcomeKind::SlipRotation);
        assert_eq!(grasp_outcome(&h, true_cog(&h), &g).unwrap().kind, OutcomeKind::Lifted);
    }

    #[test]
    fn off_object_and_invalid_models() {
        assert!(matches!(
            grasp_outcome(&rod(), Point2::new(0.5, 0.0), &GripperParams::default()),
            Err(SimError::GraspOffObject { .. })
        ));
        assert_eq!(RigidObjectModel::new(vec![]), Err(SimError::NoParts));
        let bad = Part { shape: Rect::axis_aligned(Point2::new(0.0, 0.0), [0.1, 0.1]), mass: 0.0, role: PartRole::Body };
        assert_eq!(RigidObjectModel::new(vec![bad]), Err(SimError::InvalidPart(0)));
    }

    #[test]
    fn rect_geometry() {
        let r = Rect { center: Point2::new(1.0, 1.0), half_extents: [0.5, 0.1], angle: std::f64::consts::FRAC_PI_2 };
        assert!(r.contains(Point2::new(1.0, 1.45)));
        assert!(!r.contains(Point2::new(1.45, 1.0)));
        let c = r.clamp(Point2::new(3.0, 1.0));
        assert!((c.x - 1.1).abs() < 1e-12 && (c.y - 1.0).abs() < 1e-12);
    }

    /// Monte-Carlo mass integration over the bounding box.
    pub(crate) fn sampled_cog(model: &RigidObjectModel, samples: usize, seed: u64) -> Point2 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = model.bounds();
        let (mut w, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for _ in 0..samples {
            let p = Point2::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
            let density: f64 = model
                .parts
                .iter()
                .filter(|part| part.shape.contains(p))
                .map(|part| part.mass / part.shape.area())
                .sum();
            w += density;
            sx += density * p.x;
            sy += density * p.y;
        }
        Point2::new(sx / w, sy / w)
    }

    #[test]
    fn monte_carlo_agrees_on_hammer() {
        let h = reference_hammer();
        assert!(sampled_cog(&h, 200_000, 1).distance(&true_cog(&h)) < 2e-3);
    }

    fn random_model(rng: &mut ChaCha8Rng) -> RigidObjectModel {
        let n = rng.random_range(1..5);
        let parts = (0..n)
            .map(|_| Part {
                shape: Rect {
                    center: Point2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.2..0.2)),
                    half_extents: [rng.random_range(0.005..0.15), rng.random_range(0.005..0.05)],
                    angle: rng.random_range(-3.0..3.0),
                },
                mass: rng.random_range(0.01..2.0),
                role: PartRole::Body,
            })
            .collect();
        RigidObjectModel::new(parts).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn cog_is_rigidly_equivariant(seed in any::<u64>(), angle in -3.1f64..3.1, tx in -1.0f64..1.0, ty in -1.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_model(&mut rng);
            let moved = true_cog(&m.transformed(angle, Point2::new(tx, ty)));
            let r = true_cog(&m).rotated(angle);
            prop_assert!(moved.distance(&Point2::new(r.x + tx, r.y + ty)) < 1e-9);
        }

        #[test]
        fn grasp_at_cog_never_slips(seed in any::<u64>(), tau in 1e-6f64..5.0, force in 0.1f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_model(&mut rng);
            let cog = true_cog(&m);
            prop_assume!(m.contains(cog));
            let g = GripperParams { max_normal_force: force, friction: 0.5, torque_capacity: tau, gravity: 9.81 };
            prop_assert_ne!(grasp_outcome(&m, cog, &g).unwrap().kind, OutcomeKind::SlipRotation);
        }

        #[test]
        fn torque_monotone_in_lever(a in 0.0f64..0.3, b in 0.0f64..0.3) {
            let h = reference_hammer();
            let cog = true_cog(&h);
            let g = GripperParams::default();
            let (near, far) = if a <= b { (a, b) } else { (b, a) };
            let ta = grasp_outcome(&h, Point2::new(cog.x - near, 0.0), &g).unwrap().required_torque;
            let tb = grasp_outcome(&h, Point2::new(cog.x - far, 0.0), &g).unwrap().required_torque;
            prop_assert!(ta <= tb);
        }
    }
}
