//! Dense semantic correspondence: transfer a source point onto a target
//! image by exhaustive cosine argmax over target pixel descriptors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureMap, MapError};
use crate::geometry::Pixel;
use crate::mask::Mask;
use crate::memory_bank::MemoryEntry;

#[derive(Debug, Error, PartialEq)]
pub enum CorrespondenceError {
    #[error("feature depth mismatch: source {source_depth}, target {target_depth}")]
    DepthMismatch {
        source_depth: usize,
        target_depth: usize,
    },
    #[error("source point: {0}")]
    OutOfBounds(#[from] MapError),
    #[error("mask is {mask_w}x{mask_h} but target map is {map_w}x{map_h}")]
    MaskShape {
        mask_w: usize,
        mask_h: usize,
        map_w: usize,
        map_h: usize,
    },
    #[error("target mask has no set pixels")]
    EmptyMask,
    #[error("source descriptor has zero norm")]
    ZeroSource,
    #[error("no target pixel has a nonzero descriptor")]
    NoMatch,
    #[error("every retrieved exemplar failed to produce a candidate")]
    NoCandidates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePoint {
    pub point: Pixel,
    pub confidence: f64,
    /// Id of the memory entry the point was transferred from.
    pub provenance: String,
}

/// Bilinear sample of `map` at a continuous pixel.
pub fn sample_feature(map: &FeatureMap, point: Pixel) -> Result<Vec<f64>, MapError> {
    map.sample(point)
}

/// Cosine similarity of `query` (with precomputed norm) against a stored
/// pixel vector; zero-norm pixels score `-inf`.
fn cosine(query: &[f64], query_norm: f64, pixel: &[f32]) -> f64 {
    let mut dot = 0.0;
    let mut nn = 0.0;
    for (&q, &p) in query.iter().zip(pixel) {
        let p = f64::from(p);
        dot += q * p;
        nn += p * p;
    }
    if nn == 0.0 {
        f64::NEG_INFINITY
    } else {
        (dot / (query_norm * nn.sqrt())).clamp(-1.0, 1.0)
    }
}

/// Target pixel whose descriptor best matches the source descriptor at
/// `p_src`. Scan is row-major; the first maximum wins.
pub fn map_point(
    src_map: &FeatureMap,
    tgt_map: &FeatureMap,
    p_src: Pixel,
    tgt_mask: Option<&Mask>,
) -> Result<(Pixel, f64), CorrespondenceError> {
    if src_map.depth() != tgt_map.depth() {
        return Err(CorrespondenceError::DepthMismatch {
            source_depth: src_map.depth(),
            target_depth: tgt_map.depth(),
        });
    }
    if let Some(m) = tgt_mask {
        if m.width() != tgt_map.width() || m.height() != tgt_map.height() {
            return Err(CorrespondenceError::MaskShape {
                mask_w: m.width(),
                mask_h: m.height(),
                map_w: tgt_map.width(),
                map_h: tgt_map.height(),
            });
        }
        if m.is_empty() {
            return Err(CorrespondenceError::EmptyMask);
        }
    }
    let query = sample_feature(src_map, p_src)?;
    let qn = query.iter().map(|x| x * x).sum::<f64>().sqrt();
    if qn == 0.0 {
        return Err(CorrespondenceError::ZeroSource);
    }

    let mut best: Option<(usize, usize, f64)> = None;
    let mut consider = |u: usize, v: usize| {
        let s = cosine(&query, qn, tgt_map.pixel(u, v));
        if s > f64::NEG_INFINITY && best.is_none_or(|(_, _, b)| s > b) {
            best = Some((u, v, s));
        }
    };
    match tgt_mask {
        // iter_set walks row-major, so the tie-break is unchanged.
        Some(m) => m.iter_set().for_each(|(u, v)| consider(u, v)),
        None => {
            for v in 0..tgt_map.height() {
                for u in 0..tgt_map.width() {
                    consider(u, v);
                }
            }
        }
    }
    best.map(|(u, v, s)| (Pixel::new(u as f64, v as f64), s))
        .ok_or(CorrespondenceError::NoMatch)
}

/// A retrieved exemplar paired with its (possibly failed) dense map load.
pub struct SourceView<'a> {
    pub entry: &'a MemoryEntry,
    pub map: Result<&'a FeatureMap, String>,
}

/// Non-fatal per-exemplar failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateWarning {
    pub entry_id: String,
    pub message: String,
}

/// One candidate per retrieved exemplar, in retrieval order. Exemplars that
/// fail are dropped and reported; if all fail the call errors.
pub fn generate_candidates(
    tgt_map: &FeatureMap,
    tgt_mask: &Mask,
    retrieved: &[SourceView<'_>],
) -> Result<(Vec<CandidatePoint>, Vec<CandidateWarning>), CorrespondenceError> {
    let mut candidates = Vec::with_capacity(retrieved.len());
    let mut warnings = Vec::new();
    for view in retrieved {
        let outcome = view
            .map
            .as_ref()
            .map_err(|e| e.clone())
            .and_then(|src| {
                map_point(src, tgt_map, view.entry.cog, Some(tgt_mask)).map_err(|e| e.to_string())
            });
        match outcome {
            Ok((point, confidence)) => candidates.push(CandidatePoint {
                point,
                confidence,
                provenance: view.entry.id.clone(),
            }),
            Err(message) => {
                tracing::warn!(entry = %view.entry.id, %message, "dropping exemplar");
                warnings.push(CandidateWarning {
                    entry_id: view.entry.id.clone(),
                    message,
                });
            }
        }
    }
    if candidates.is_empty() {
        return Err(CorrespondenceError::NoCandidates);
    }
    Ok((candidates, warnings))
}
