use std::path::Path;

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pixel;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("failed to read mask {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("failed to write mask {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

/// Binary image, row-major. `get(u, v)` addresses column `u`, row `v`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        u < self.width && v < self.height && self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, value: bool) {
        assert!(u < self.width && v < self.height, "mask index out of range");
        self.data[v * self.width + u] = value;
    }

    /// True when the nearest pixel to `p` is inside the image and set.
    pub fn contains(&self, p: &Pixel) -> bool {
        p.to_index(self.width, self.height)
            .is_some_and(|(u, v)| self.get(u, v))
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Set pixels as `(u, v)` in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }

    /// Integer translation; pixels shifted outside the frame are dropped.
    pub fn shifted(&self, du: i64, dv: i64) -> Mask {
        let mut out = Mask::new(self.width, self.height);
        for (u, v) in self.iter_set() {
            let (nu, nv) = (u as i64 + du, v as i64 + dv);
            if nu >= 0 && nv >= 0 && (nu as usize) < self.width && (nv as usize) < self.height {
                out.set(nu as usize, nv as usize, true);
            }
        }
        out
    }

    /// Any nonzero gray level counts as set.
    pub fn load_png(path: &Path) -> Result<Mask, MaskError> {
        let img = image::open(path)
            .map_err(|source| MaskError::Read {
                path: path.display().to_string(),
                source,
            })?
            .to_luma8();
        let (w, h) = img.dimensions();
        Ok(Mask::from_fn(w as usize, h as usize, |u, v| {
            img.get_pixel(u as u32, v as u32).0[0] > 0
        }))
    }

    pub fn save_png(&self, path: &Path) -> Result<(), MaskError> {
        let img = GrayImage::from_fn(self.width as u32, self.height as u32, |u, v| {
            Luma([if self.get(u as usize, v as usize) { 255 } else { 0 }])
        });
        img.save(path).map_err(|source| MaskError::Write {
            path: path.display().to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_roundtrip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mask = Mask::from_fn(7, 5, |u, v| (u + 2 * v) % 3 == 0);
        mask.save_png(&path).unwrap();
        assert_eq!(Mask::load_png(&path).unwrap(), mask);
    }

    #[test]
    fn shift_drops_pixels_leaving_the_frame() {
        let mut m = Mask::new(4, 4);
        m.set(3, 0, true);
        m.set(1, 1, true);
        let s = m.shifted(1, 2);
        assert_eq!(s.count(), 1);
        assert!(s.get(2, 3));
    }

    #[test]
    fn contains_rounds_to_nearest_pixel() {
        let mut m = Mask::new(3, 3);
        m.set(1, 1, true);
        assert!(m.contains(&Pixel::new(1.4, 0.6)));
        assert!(!m.contains(&Pixel::new(1.6, 1.0)));
        assert!(!m.contains(&Pixel::new(-0.6, 1.0)));
    }
}
