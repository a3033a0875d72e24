//! Exemplar memory: CoG-annotated images with global descriptors, queried
//! by cosine similarity.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{self, FeatureMap, FeatureVector, FormatError};
use crate::geometry::Pixel;

/// Number of exemplars forwarded to correspondence.
pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Error)]
pub enum BankError {
    #[error("dimension mismatch: bank has {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("duplicate entry id {0:?}")]
    DuplicateId(String),
    #[error("entry {id:?}: CoG ({u}, {v}) outside {width}x{height} exemplar image")]
    CogOutOfBounds {
        id: String,
        u: f64,
        v: f64,
        width: usize,
        height: usize,
    },
    #[error("memory bank is empty")]
    EmptyBank,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("failed to read manifest {path}: {source}")]
    ManifestIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse manifest {path}: {source}")]
    ManifestParse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("entry {id:?}: {source}")]
    Features {
        id: String,
        #[source]
        source: FormatError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CogSource {
    Suspension,
    Centroid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub id: String,
    pub category: String,
    pub image_path: PathBuf,
    pub featmap_path: PathBuf,
    pub fvec: FeatureVector,
    pub cog: Pixel,
    pub source: CogSource,
    /// Exemplar image size `(width, height)` in pixels.
    pub image_size: (usize, usize),
}

/// Similarity-ranked retrieval result. `rank` is the position in the
/// returned list, `index` the insertion index in the bank.
#[derive(Debug, Clone, Copy)]
pub struct Retrieved<'a> {
    pub entry: &'a MemoryEntry,
    pub index: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MemoryBank {
    entries: Vec<MemoryEntry>,
}

impl MemoryBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `None` until the first entry fixes it.
    pub fn dimension(&self) -> Option<usize> {
        self.entries.first().map(|e| e.fvec.dimension())
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&MemoryEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn add_entry(mut self, entry: MemoryEntry) -> Result<Self, BankError> {
        if let Some(d) = self.dimension() {
            if entry.fvec.dimension() != d {
                return Err(BankError::DimensionMismatch {
                    expected: d,
                    found: entry.fvec.dimension(),
                });
            }
        }
        if self.entries.iter().any(|e| e.id == entry.id) {
            return Err(BankError::DuplicateId(entry.id));
        }
        let (w, h) = entry.image_size;
        let Pixel { u, v } = entry.cog;
        if !(u >= 0.0 && v >= 0.0 && u <= (w as f64 - 1.0) && v <= (h as f64 - 1.0)) {
            return Err(BankError::CogOutOfBounds {
                id: entry.id,
                u,
                v,
                width: w,
                height: h,
            });
        }
        self.entries.push(entry);
        Ok(self)
    }

    /// Top `k` entries by cosine similarity, ties broken by insertion order.
    pub fn retrieve_topk(
        &self,
        query: &FeatureVector,
        k: usize,
    ) -> Result<Vec<Retrieved<'_>>, BankError> {
        let d = self.dimension().ok_or(BankError::EmptyBank)?;
        if k == 0 {
            return Err(BankError::ZeroK);
        }
        if query.dimension() != d {
            return Err(BankError::DimensionMismatch {
                expected: d,
                found: query.dimension(),
            });
        }
        let mut scored: Vec<Retrieved<'_>> = self
            .entries
            .iter()
            .enumerate()
            .map(|(index, entry)| Retrieved {
                entry,
                index,
                similarity: entry.fvec.dot(query).clamp(-1.0, 1.0),
            })
            .collect();
        scored.sort_by(|a, b| {
            b.similarity
                .total_cmp(&a.similarity)
                .then(a.index.cmp(&b.index))
        });
        scored.truncate(k);
        Ok(scored)
    }

    /// Loads a JSON manifest; relative paths resolve against the manifest's
    /// directory. Exemplar image size is taken from the FMAP header.
    pub fn load_manifest(path: &Path) -> Result<Self, BankError> {
        let text = fs::read_to_string(path).map_err(|source| BankError::ManifestIo {
            path: path.display().to_string(),
            source,
        })?;
        let records: Vec<ManifestEntry> =
            serde_json::from_str(&text).map_err(|source| BankError::ManifestParse {
                path: path.display().to_string(),
                source,
            })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut bank = MemoryBank::new();
        for rec in records {
            let featmap_path = base.join(&rec.featmap_path);
            let fvec = FeatureVector::read(&base.join(&rec.fvec_path)).map_err(|source| {
                BankError::Features {
                    id: rec.id.clone(),
                    source,
                }
            })?;
            let (h, w, _) =
                features::read_fmap_header(&featmap_path).map_err(|source| BankError::Features {
                    id: rec.id.clone(),
                    source,
                })?;
            bank = bank.add_entry(MemoryEntry {
                id: rec.id,
                category: rec.category,
                image_path: base.join(&rec.image_path),
                featmap_path,
                fvec,
                cog: rec.cog,
                source: rec.source,
                image_size: (w, h),
            })?;
        }
        Ok(bank)
    }
}

/// One record of the on-disk manifest (a JSON array of these).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub category: String,
    pub image_path: PathBuf,
    pub featmap_path: PathBuf,
    pub fvec_path: PathBuf,
    pub cog: Pixel,
    pub source: CogSource,
}

/// Supplies the dense map of a memory entry's exemplar image.
pub trait FeatureSource: Send + Sync {
    fn feature_map(&self, entry: &MemoryEntry) -> Result<Arc<FeatureMap>, String>;
}

/// Loads FMAP files from `entry.featmap_path`, caching successful loads.
#[derive(Debug, Default)]
pub struct FileFeatureSource {
    cache: Mutex<HashMap<PathBuf, Arc<FeatureMap>>>,
}

impl FeatureSource for FileFeatureSource {
    fn feature_map(&self, entry: &MemoryEntry) -> Result<Arc<FeatureMap>, String> {
        if let Some(m) = self.cache.lock().expect("cache lock").get(&entry.featmap_path) {
            return Ok(Arc::clone(m));
        }
        let map = Arc::new(FeatureMap::read(&entry.featmap_path).map_err(|e| e.to_string())?);
        self.cache
            .lock()
            .expect("cache lock")
            .insert(entry.featmap_path.clone(), Arc::clone(&map));
        Ok(map)
    }
}

/// Fixed in-memory maps keyed by entry id.
#[derive(Debug, Default)]
pub struct InMemoryFeatureSource {
    maps: HashMap<String, Arc<FeatureMap>>,
}

impl InMemoryFeatureSource {
    pub fn insert(&mut self, id: impl Into<String>, map: FeatureMap) {
        self.maps.insert(id.into(), Arc::new(map));
    }
}

impl FeatureSource for InMemoryFeatureSource {
    fn feature_map(&self, entry: &MemoryEntry) -> Result<Arc<FeatureMap>, String> {
        self.maps
            .get(&entry.id)
            .cloned()
            .ok_or_else(|| format!("no feature map for entry {:?}", entry.id))
    }
}
