//! Parameterized two-part tool family used by the benchmark.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Part, PartRole, Rect, RigidObjectModel, SimError};
use crate::geometry::Point2;

/// Uniform range `[min, max]`.
pub type Range = [f64; 2];

/// Dimensions of one rectangular part: `length` along the object x axis,
/// `width` along y, both full extents in meters; mass in kilograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartSpec {
    pub length: Range,
    pub width: Range,
    pub mass: Range,
}

/// How the body attaches to the grip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PartLayout {
    /// Body continues the grip along +x.
    #[default]
    Inline,
    /// Body sits at the far end of the grip, sticking out along +y.
    Elbow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: String,
    /// The part a person would hold.
    pub grip: PartSpec,
    pub body: PartSpec,
    #[serde(default)]
    pub layout: PartLayout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolFamily {
    pub categories: Vec<CategorySpec>,
}

/// One sampled object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInstance {
    pub category: String,
    pub category_index: usize,
    pub model: RigidObjectModel,
}

fn part(length: Range, width: Range, mass: Range) -> PartSpec {
    PartSpec { length, width, mass }
}

fn inline(name: &str, grip: PartSpec, body: PartSpec) -> CategorySpec {
    CategorySpec {
        name: name.into(),
        grip,
        body,
        layout: PartLayout::Inline,
    }
}

impl ToolFamily {
    /// Ten hand-tool categories with plausible dimensions and masses.
    pub fn default_tools() -> Self {
        let categories = vec![
            inline("hammer", part([0.22, 0.28], [0.025, 0.03], [0.10, 0.18]), part([0.03, 0.04], [0.09, 0.11], [0.45, 0.70])),
            inline("wrench", part([0.12, 0.18], [0.014, 0.018], [0.06, 0.10]), part([0.03, 0.04], [0.035, 0.045], [0.05, 0.09])),
            inline("pincers", part([0.10, 0.13], [0.025, 0.032], [0.06, 0.09]), part([0.06, 0.08], [0.022, 0.028], [0.12, 0.18])),
            inline("t-type allen wrench", part([0.018, 0.024], [0.10, 0.12], [0.08, 0.12]), part([0.15, 0.20], [0.006, 0.008], [0.03, 0.05])),
            inline("hand file", part([0.09, 0.11], [0.022, 0.028], [0.03, 0.05]), part([0.15, 0.20], [0.018, 0.022], [0.10, 0.16])),
            CategorySpec {
                name: "allen key".into(),
                grip: part([0.08, 0.11], [0.006, 0.008], [0.02, 0.03]),
                body: part([0.006, 0.008], [0.025, 0.035], [0.008, 0.012]),
                layout: PartLayout::Elbow,
            },
            inline("adjustable wrench", part([0.15, 0.20], [0.022, 0.028], [0.12, 0.18]), part([0.04, 0.05], [0.06, 0.07], [0.18, 0.30])),
            inline("ratchet wrench", part([0.14, 0.18], [0.018, 0.022], [0.07, 0.10]), part([0.035, 0.045], [0.04, 0.05], [0.10, 0.16])),
            inline("screwdriver", part([0.09, 0.11], [0.026, 0.032], [0.05, 0.08]), part([0.10, 0.15], [0.006, 0.008], [0.02, 0.04])),
            inline("chisel", part([0.10, 0.12], [0.026, 0.032], [0.05, 0.08]), part([0.12, 0.15], [0.018, 0.022], [0.10, 0.15])),
        ];
        Self { categories }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.categories.is_empty() {
            return Err(SimError::InvalidFamily("no categories".into()));
        }
        for c in &self.categories {
            for (label, p) in [("grip", &c.grip), ("body", &c.body)] {
                for (field, [lo, hi]) in [("length", p.length), ("width", p.width), ("mass", p.mass)] {
                    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                        return Err(SimError::InvalidFamily(format!(
                            "{}: {label} {field} range [{lo}, {hi}] must be positive and ordered",
                            c.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.categories.iter().map(|c| c.name.clone()).collect()
    }

    /// Draws an instance of category `index`; the grip starts at x = 0.
    pub fn sample(&self, index: usize, rng: &mut impl Rng) -> ToolInstance {
        let spec = &self.categories[index];
        let mut draw = |[lo, hi]: Range| if lo < hi { rng.random_range(lo..=hi) } else { lo };
        let (gl, gw, gm) = (draw(spec.grip.length), draw(spec.grip.width), draw(spec.grip.mass));
        let (bl, bw, bm) = (draw(spec.body.length), draw(spec.body.width), draw(spec.body.mass));
        let grip_center = Point2::new(gl / 2.0, 0.0);
        let body_center = match spec.layout {
            PartLayout::Inline => Point2::new(gl + bl / 2.0, 0.0),
            PartLayout::Elbow => Point2::new(gl - bl / 2.0, (gw + bw) / 2.0),
        };
        let model = RigidObjectModel {
            parts: vec![
                Part {
                    shape: Rect::axis_aligned(grip_center, [gl / 2.0, gw / 2.0]),
                    mass: gm,
                    role: PartRole::Grip,
                },
                Part {
                    shape: Rect::axis_aligned(body_center, [bl / 2.0, bw / 2.0]),
                    mass: bm,
                    role: PartRole::Body,
                },
            ],
        };
        ToolInstance {
            category: spec.name.clone(),
            category_index: index,
            model,
        }
    }
}

impl Default for ToolFamily {
    fn default() -> Self {
        Self::default_tools()
    }
}
