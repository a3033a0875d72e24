use serde::{Deserialize, Serialize};

/// Continuous image coordinate. `u` is the column, `v` the row; integer
/// values sit on pixel centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &Pixel) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }

    /// Nearest integer pixel, or `None` if it falls outside `width x height`.
    pub fn to_index(&self, width: usize, height: usize) -> Option<(usize, usize)> {
        let u = self.u.round();
        let v = self.v.round();
        if !u.is_finite() || !v.is_finite() || u < 0.0 || v < 0.0 {
            return None;
        }
        let (u, v) = (u as usize, v as usize);
        (u < width && v < height).then_some((u, v))
    }

    pub fn translated(&self, du: f64, dv: f64) -> Pixel {
        Pixel::new(self.u + du, self.v + dv)
    }
}

impl From<(f64, f64)> for Pixel {
    fn from((u, v): (f64, f64)) -> Self {
        Pixel::new(u, v)
    }
}

/// Point in a planar object frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn rotated(&self, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}
