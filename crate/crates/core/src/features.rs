//! Global and dense image descriptors and their binary file formats.
//!
//! Both formats are little-endian with a four byte magic and a `u32`
//! version (currently 1):
//!
//! ```text
//! FVEC: "FVEC" | version | D           | D x f32
//! FMAP: "FMAP" | version | H | W | D   | H*W*D x f32 (row-major, channel-last)
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pixel;

pub const FVEC_MAGIC: &[u8; 4] = b"FVEC";
pub const FMAP_MAGIC: &[u8; 4] = b"FMAP";
pub const FORMAT_VERSION: u32 = 1;

const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("zero-sized dimension in header")]
    ZeroDimension,
    #[error("payload length mismatch: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },
    #[error("non-finite value at component {0}")]
    NonFinite(usize),
    #[error("zero-norm feature vector cannot be normalized")]
    ZeroNorm,
}

impl FormatError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Unit-norm global descriptor. Construction normalizes; zero vectors are
/// rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn normalized(values: Vec<f64>) -> Result<Self, FormatError> {
        if values.is_empty() {
            return Err(FormatError::ZeroDimension);
        }
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(FormatError::NonFinite(i));
        }
        let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(FormatError::ZeroNorm);
        }
        Ok(Self(values.into_iter().map(|x| x / norm).collect()))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn is_unit(&self) -> bool {
        let n = self.0.iter().map(|x| x * x).sum::<f64>().sqrt();
        (n - 1.0).abs() <= NORM_TOLERANCE
    }

    pub fn read(path: &Path) -> Result<Self, FormatError> {
        let bytes = fs::read(path).map_err(|e| FormatError::io(path, e))?;
        let raw = decode_fvec(&bytes)?;
        Self::normalized(raw.into_iter().map(f64::from).collect())
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = FormatError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        FeatureVector::normalized(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense per-pixel descriptors, `height x width x depth`, channel-last.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    depth: usize,
    data: Vec<f32>,
}

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("feature map dimensions must be positive (got {height}x{width}x{depth})")]
    ZeroDimension {
        height: usize,
        width: usize,
        depth: usize,
    },
    #[error("data length {found} does not match {height}x{width}x{depth}")]
    Length {
        height: usize,
        width: usize,
        depth: usize,
        found: usize,
    },
    #[error("point ({u}, {v}) outside {width}x{height} feature map")]
    OutOfBounds {
        u: f64,
        v: f64,
        width: usize,
        height: usize,
    },
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, depth: usize, data: Vec<f32>) -> Result<Self, MapError> {
        if height == 0 || width == 0 || depth == 0 {
            return Err(MapError::ZeroDimension {
                height,
                width,
                depth,
            });
        }
        if data.len() != height * width * depth {
            return Err(MapError::Length {
                height,
                width,
                depth,
                found: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            depth,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, depth: usize) -> Result<Self, MapError> {
        Self::new(height, width, depth, vec![0.0; height * width * depth])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Vector stored at integer pixel (column `u`, row `v`).
    pub fn pixel(&self, u: usize, v: usize) -> &[f32] {
        let start = (v * self.width + u) * self.depth;
        &self.data[start..start + self.depth]
    }

    pub fn pixel_mut(&mut self, u: usize, v: usize) -> &mut [f32] {
        let start = (v * self.width + u) * self.depth;
        &mut self.data[start..start + self.depth]
    }

    /// Bilinear interpolation of the four surrounding pixel vectors.
    pub fn sample(&self, p: Pixel) -> Result<Vec<f64>, MapError> {
        let max_u = (self.width - 1) as f64;
        let max_v = (self.height - 1) as f64;
        if !(p.u >= 0.0 && p.u <= max_u && p.v >= 0.0 && p.v <= max_v) {
            return Err(MapError::OutOfBounds {
                u: p.u,
                v: p.v,
                width: self.width,
                height: self.height,
            });
        }
        let u0 = p.u.floor() as usize;
        let v0 = p.v.floor() as usize;
        let u1 = (u0 + 1).min(self.width - 1);
        let v1 = (v0 + 1).min(self.height - 1);
        let fu = p.u - u0 as f64;
        let fv = p.v - v0 as f64;
        let corners = [
            (u0, v0, (1.0 - fu) * (1.0 - fv)),
            (u1, v0, fu * (1.0 - fv)),
            (u0, v1, (1.0 - fu) * fv),
            (u1, v1, fu * fv),
        ];
        let mut out = vec![0.0; self.depth];
        for (u, v, w) in corners {
            if w == 0.0 {
                continue;
            }
            for (o, &x) in out.iter_mut().zip(self.pixel(u, v)) {
                *o += w * f64::from(x);
            }
        }
        Ok(out)
    }

    /// Integer translation; vacated pixels are zero.
    pub fn shifted(&self, du: i64, dv: i64) -> FeatureMap {
        let mut out = FeatureMap::zeros(self.height, self.width, self.depth)
            .expect("dimensions already validated");
        for v in 0..self.height {
            for u in 0..self.width {
                let (nu, nv) = (u as i64 + du, v as i64 + dv);
                if nu >= 0 && nv >= 0 && (nu as usize) < self.width && (nv as usize) < self.height {
                    out.pixel_mut(nu as usize, nv as usize)
                        .copy_from_slice(self.pixel(u, v));
                }
            }
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self, FormatError> {
        let bytes = fs::read(path).map_err(|e| FormatError::io(path, e))?;
        decode_fmap(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<(), FormatError> {
        fs::write(path, self.encode()).map_err(|e| FormatError::io(path, e))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.data.len() * 4);
        out.extend_from_slice(FMAP_MAGIC);
        for x in [FORMAT_VERSION, self.height as u32, self.width as u32, self.depth as u32] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }
}

/// Header summary returned by [`validate_file`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "format")]
pub enum FileInfo {
    #[serde(rename = "FVEC")]
    Fvec { dimension: usize },
    #[serde(rename = "FMAP")]
    Fmap {
        height: usize,
        width: usize,
        depth: usize,
    },
}

pub fn write_fvec(path: &Path, values: &[f32]) -> Result<(), FormatError> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&encode_fvec(values)))
        .map_err(|e| FormatError::io(path, e))
}

pub fn encode_fvec(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + values.len() * 4);
    out.extend_from_slice(FVEC_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for x in values {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

/// Full structural check of an FVEC or FMAP file, dispatched on its magic.
/// FVEC files must additionally be normalizable (finite, nonzero).
pub fn validate_file(path: &Path) -> Result<FileInfo, FormatError> {
    let bytes = fs::read(path).map_err(|e| FormatError::io(path, e))?;
    match bytes.get(..4) {
        Some(m) if m == FVEC_MAGIC => {
            let raw = decode_fvec(&bytes)?;
            let dimension = raw.len();
            FeatureVector::normalized(raw.into_iter().map(f64::from).collect())?;
            Ok(FileInfo::Fvec { dimension })
        }
        Some(m) if m == FMAP_MAGIC => {
            let map = decode_fmap(&bytes)?;
            Ok(FileInfo::Fmap {
                height: map.height,
                width: map.width,
                depth: map.depth,
            })
        }
        other => Err(FormatError::BadMagic {
            expected: "FVEC or FMAP".into(),
            found: String::from_utf8_lossy(other.unwrap_or(&bytes)).into_owned(),
        }),
    }
}

/// Reads only the FMAP header: `(height, width, depth)`.
pub fn read_fmap_header(path: &Path) -> Result<(usize, usize, usize), FormatError> {
    use std::io::Read;
    let mut header = [0u8; 20];
    fs::File::open(path)
        .and_then(|mut f| f.read_exact(&mut header))
        .map_err(|e| FormatError::io(path, e))?;
    check_magic(&header, FMAP_MAGIC)?;
    let h = read_u32(&header, 8) as usize;
    let w = read_u32(&header, 12) as usize;
    let d = read_u32(&header, 16) as usize;
    if h == 0 || w == 0 || d == 0 {
        return Err(FormatError::ZeroDimension);
    }
    Ok((h, w, d))
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

fn check_magic(bytes: &[u8], magic: &[u8; 4]) -> Result<(), FormatError> {
    let found = bytes.get(..4).unwrap_or(bytes);
    if found != magic {
        return Err(FormatError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(found).into_owned(),
        });
    }
    let version = bytes.get(4..8).map(|b| read_u32(b, 0));
    match version {
        Some(FORMAT_VERSION) => Ok(()),
        Some(v) => Err(FormatError::UnsupportedVersion(v)),
        None => Err(FormatError::Length {
            expected: 8,
            found: bytes.len(),
        }),
    }
}

fn decode_floats(payload: &[u8]) -> Result<Vec<f32>, FormatError> {
    payload
        .chunks_exact(4)
        .enumerate()
        .map(|(i, c)| {
            let x = f32::from_le_bytes(c.try_into().expect("4-byte chunk"));
            if x.is_finite() {
                Ok(x)
            } else {
                Err(FormatError::NonFinite(i))
            }
        })
        .collect()
}

pub fn decode_fvec(bytes: &[u8]) -> Result<Vec<f32>, FormatError> {
    check_magic(bytes, FVEC_MAGIC)?;
    if bytes.len() < 12 {
        return Err(FormatError::Length {
            expected: 12,
            found: bytes.len(),
        });
    }
    let d = read_u32(bytes, 8) as usize;
    if d == 0 {
        return Err(FormatError::ZeroDimension);
    }
    let expected = 12 + d * 4;
    if bytes.len() != expected {
        return Err(FormatError::Length {
            expected,
            found: bytes.len(),
        });
    }
    decode_floats(&bytes[12..])
}

pub fn decode_fmap(bytes: &[u8]) -> Result<FeatureMap, FormatError> {
    check_magic(bytes, FMAP_MAGIC)?;
    if bytes.len() < 20 {
        return Err(FormatError::Length {
            expected: 20,
            found: bytes.len(),
        });
    }
    let h = read_u32(bytes, 8) as usize;
    let w = read_u32(bytes, 12) as usize;
    let d = read_u32(bytes, 16) as usize;
    if h == 0 || w == 0 || d == 0 {
        return Err(FormatError::ZeroDimension);
    }
    let expected = h
        .checked_mul(w)
        .and_then(|x| x.checked_mul(d))
        .and_then(|x| x.checked_mul(4))
        .and_then(|x| x.checked_add(20))
        .ok_or(FormatError::Length {
            expected: usize::MAX,
            found: bytes.len(),
        })?;
    if bytes.len() != expected {
        return Err(FormatError::Length {
            expected,
            found: bytes.len(),
        });
    }
    let data = decode_floats(&bytes[20..])?;
    Ok(FeatureMap {
        height: h,
        width: w,
        depth: d,
        data,
    })
}
