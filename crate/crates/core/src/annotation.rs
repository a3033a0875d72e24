//! Ground-truth CoG annotation: plumb-line intersection from two suspension
//! photos, mask centroids, and dataset manifest validation.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::mask::Mask;

/// Tool categories of the reference dataset.
pub const CATEGORIES: [&str; 10] = [
    "hammer",
    "wrench",
    "pincers",
    "t-type allen wrench",
    "hand file",
    "allen key",
    "adjustable wrench",
    "ratchet wrench",
    "screwdriver",
    "chisel",
];

/// Per-category image counts of the reference dataset.
pub fn reference_counts() -> BTreeMap<String, usize> {
    [
        ("hammer", 75),
        ("adjustable wrench", 54),
        ("wrench", 241),
        ("ratchet wrench", 29),
        ("pincers", 60),
        ("hand file", 76),
        ("t-type allen wrench", 44),
        ("screwdriver", 114),
        ("allen key", 94),
        ("chisel", 9),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

pub fn normalize_category(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Error, PartialEq)]
pub enum AnnotationError {
    #[error("plumb lines are nearly parallel (|det| = {det:e})")]
    NearParallel { det: f64 },
    #[error("mask has no set pixels")]
    EmptyMask,
    #[error("degenerate plumb line: endpoints coincide")]
    DegenerateLine,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlumbLine {
    pub anchor: Point2,
    /// Unit gravity direction in the object frame.
    pub direction: Point2,
}

impl PlumbLine {
    pub fn new(anchor: Point2, direction: Point2) -> Result<Self, AnnotationError> {
        let n = direction.x.hypot(direction.y);
        if n == 0.0 || !n.is_finite() {
            return Err(AnnotationError::DegenerateLine);
        }
        Ok(Self {
            anchor,
            direction: Point2::new(direction.x / n, direction.y / n),
        })
    }

    /// Line through two labeled points (e.g. rope attachment and a point
    /// further down the rope's extension).
    pub fn through(a: Point2, b: Point2) -> Result<Self, AnnotationError> {
        Self::new(a, Point2::new(b.x - a.x, b.y - a.y))
    }

    pub fn distance_to(&self, p: Point2) -> f64 {
        let (dx, dy) = (p.x - self.anchor.x, p.y - self.anchor.y);
        (dx * self.direction.y - dy * self.direction.x).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnnotationMethod {
    Suspension,
    Centroid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CogAnnotation {
    pub point: Point2,
    pub method: AnnotationMethod,
    /// Largest distance from `point` to either plumb line; 0 for centroids.
    pub residual: f64,
}

fn cross(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * by - ay * bx
}

/// Intersection of two plumb lines expressed in a common object frame.
pub fn plumb_intersection(l1: &PlumbLine, l2: &PlumbLine) -> Result<CogAnnotation, AnnotationError> {
    let (d1, d2) = (l1.direction, l2.direction);
    let det = cross(d1.x, d1.y, d2.x, d2.y);
    let scale = [l1.anchor.x, l1.anchor.y, l2.anchor.x, l2.anchor.y]
        .iter()
        .fold(1.0f64, |m, x| m.max(x.abs()));
    if det.abs() < 1e-9 * scale {
        return Err(AnnotationError::NearParallel { det });
    }
    let (ex, ey) = (l2.anchor.x - l1.anchor.x, l2.anchor.y - l1.anchor.y);
    let t = cross(ex, ey, d2.x, d2.y) / det;
    let s = cross(ex, ey, d1.x, d1.y) / det;
    let p1 = Point2::new(l1.anchor.x + t * d1.x, l1.anchor.y + t * d1.y);
    let p2 = Point2::new(l2.anchor.x + s * d2.x, l2.anchor.y + s * d2.y);
    // Averaging the two parametrizations makes the result exactly symmetric.
    let point = Point2::new(0.5 * (p1.x + p2.x), 0.5 * (p1.y + p2.y));
    let residual = l1.distance_to(point).max(l2.distance_to(point));
    Ok(CogAnnotation {
        point,
        method: AnnotationMethod::Suspension,
        residual,
    })
}

/// Mean of set-pixel coordinates; pixel `(u, v)` contributes the point
/// `(u, v)`.
pub fn region_centroid(mask: &Mask) -> Result<CogAnnotation, AnnotationError> {
    let (mut su, mut sv, mut n) = (0u64, 0u64, 0u64);
    for (u, v) in mask.iter_set() {
        su += u as u64;
        sv += v as u64;
        n += 1;
    }
    if n == 0 {
        return Err(AnnotationError::EmptyMask);
    }
    Ok(CogAnnotation {
        point: Point2::new(su as f64 / n as f64, sv as f64 / n as f64),
        method: AnnotationMethod::Centroid,
        residual: 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub category: String,
    pub image_path: PathBuf,
    #[serde(default)]
    pub suspended_image_paths: Vec<PathBuf>,
    pub annotation: CogAnnotation,
    /// `(width, height)`; read from the image header when absent.
    #[serde(default)]
    pub image_size: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DatasetManifest {
    pub entries: Vec<DatasetEntry>,
    /// Counts the manifest claims for itself, checked against its entries.
    #[serde(default)]
    pub category_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountMismatch {
    pub category: String,
    pub expected: usize,
    pub actual: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedEntry {
    pub index: usize,
    pub image_path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub counts: BTreeMap<String, usize>,
    pub total: usize,
    pub missing_files: Vec<PathBuf>,
    pub flagged: Vec<FlaggedEntry>,
    pub unknown_categories: Vec<String>,
    /// Declared `category_counts` that disagree with the entries.
    pub declared_mismatches: Vec<CountMismatch>,
    /// Disagreements with the expected-count table, when one was given.
    pub expected_mismatches: Vec<CountMismatch>,
    pub expected_total: Option<usize>,
    /// No missing files, flags, unknown categories, or count mismatches.
    pub all_match: bool,
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DatasetError> {
    read_json(path)
}

pub fn load_expected_counts(path: &Path) -> Result<BTreeMap<String, usize>, DatasetError> {
    read_json(path)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn count_mismatches(
    expected: &BTreeMap<String, usize>,
    actual: &BTreeMap<String, usize>,
) -> Vec<CountMismatch> {
    let expected: BTreeMap<String, usize> = expected
        .iter()
        .map(|(k, v)| (normalize_category(k), *v))
        .collect();
    let mut keys: Vec<&String> = expected.keys().chain(actual.keys()).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .filter_map(|k| {
            let e = expected.get(k).copied().unwrap_or(0);
            let a = actual.get(k).copied().unwrap_or(0);
            (e != a).then(|| CountMismatch {
                category: k.clone(),
                expected: e,
                actual: a,
            })
        })
        .collect()
}

/// Checks counts, file presence and annotation bounds. Relative paths
/// resolve against `base_dir`.
pub fn validate_dataset(
    manifest: &DatasetManifest,
    base_dir: &Path,
    expected: Option<&BTreeMap<String, usize>>,
) -> ValidationReport {
    let mut counts = BTreeMap::new();
    let mut missing_files = Vec::new();
    let mut flagged = Vec::new();
    let mut unknown = Vec::new();

    for (index, entry) in manifest.entries.iter().enumerate() {
        let category = normalize_category(&entry.category);
        if !CATEGORIES.contains(&category.as_str()) && !unknown.contains(&category) {
            unknown.push(category.clone());
        }
        *counts.entry(category).or_insert(0) += 1;

        let image = base_dir.join(&entry.image_path);
        let exists = image.is_file();
        if !exists {
            missing_files.push(entry.image_path.clone());
        }
        for p in &entry.suspended_image_paths {
            if !base_dir.join(p).is_file() {
                missing_files.push(p.clone());
            }
        }

        let size = entry.image_size.or_else(|| {
            exists
                .then(|| image::image_dimensions(&image).ok())
                .flatten()
                .map(|(w, h)| (w as usize, h as usize))
        });
        let p = entry.annotation.point;
        if !(p.x.is_finite() && p.y.is_finite()) {
            flagged.push(FlaggedEntry {
                index,
                image_path: entry.image_path.clone(),
                reason: "non-finite annotation".into(),
            });
        } else if let Some((w, h)) = size {
            if p.x < 0.0 || p.y < 0.0 || p.x > w as f64 - 1.0 || p.y > h as f64 - 1.0 {
                flagged.push(FlaggedEntry {
                    index,
                    image_path: entry.image_path.clone(),
                    reason: format!("annotation ({}, {}) outside {w}x{h} image", p.x, p.y),
                });
            }
        }
        if entry.annotation.residual < 0.0 {
            flagged.push(FlaggedEntry {
                index,
                image_path: entry.image_path.clone(),
                reason: "negative residual".into(),
            });
        }
    }

    let declared_mismatches = if manifest.category_counts.is_empty() {
        Vec::new()
    } else {
        count_mismatches(&manifest.category_counts, &counts)
    };
    let expected_mismatches = expected
        .map(|e| count_mismatches(e, &counts))
        .unwrap_or_default();
    let all_match = missing_files.is_empty()
        && flagged.is_empty()
        && unknown.is_empty()
        && declared_mismatches.is_empty()
        && expected_mismatches.is_empty();
    ValidationReport {
        total: manifest.entries.len(),
        counts,
        missing_files,
        flagged,
        unknown_categories: unknown,
        declared_mismatches,
        expected_mismatches,
        expected_total: expected.map(|e| e.values().sum()),
        all_match,
    }
}

/// One row of the suspension CSV: a plumb line given by two points.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SuspensionRow {
    pub image_id: String,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateResult {
    pub image_id: String,
    #[serde(flatten)]
    pub outcome: AnnotateOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotateOutcome {
    Annotation(CogAnnotation),
    Error(String),
}

/// Parses `image_id,x1,y1,x2,y2` rows (header optional) and intersects the
/// two suspension lines of each image, in first-appearance order.
pub fn annotate_csv(input: impl Read) -> Result<Vec<AnnotateResult>, DatasetError> {
    let mut text = String::new();
    let mut input = input;
    input.read_to_string(&mut text).map_err(|source| DatasetError::Io {
        path: "<csv>".into(),
        source,
    })?;
    let has_header = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.trim_start().starts_with("image_id"));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut groups: Vec<(String, Vec<SuspensionRow>)> = Vec::new();
    for (i, rec) in reader.deserialize::<SuspensionRow>().enumerate() {
        if i == 0 && has_header {
            continue;
        }
        let row = rec.map_err(|e| DatasetError::Parse {
            path: "<csv>".into(),
            message: e.to_string(),
        })?;
        match groups.iter_mut().find(|(id, _)| *id == row.image_id) {
            Some((_, rows)) => rows.push(row),
            None => groups.push((row.image_id.clone(), vec![row])),
        }
    }
    Ok(groups
        .into_iter()
        .map(|(image_id, rows)| {
            let outcome = match annotate_rows(&rows) {
                Ok(a) => AnnotateOutcome::Annotation(a),
                Err(e) => AnnotateOutcome::Error(e),
            };
            AnnotateResult { image_id, outcome }
        })
        .collect())
}

fn annotate_rows(rows: &[SuspensionRow]) -> Result<CogAnnotation, String> {
    if rows.len() != 2 {
        return Err(format!("expected 2 suspension lines, found {}", rows.len()));
    }
    let line = |r: &SuspensionRow| {
        PlumbLine::through(Point2::new(r.x1, r.y1), Point2::new(r.x2, r.y2))
    };
    let (a, b) = (
        line(&rows[0]).map_err(|e| e.to_string())?,
        line(&rows[1]).map_err(|e| e.to_string())?,
    );
    plumb_intersection(&a, &b).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(ax: f64, ay: f64, dx: f64, dy: f64) -> PlumbLine {
        PlumbLine::new(Point2::new(ax, ay), Point2::new(dx, dy)).unwrap()
    }

    #[test]
    fn perpendicular_lines_through_common_point() {
        let a = plumb_intersection(&line(3.0, 0.0, 0.0, 1.0), &line(-2.0, 4.0, 1.0, 0.0)).unwrap();
        assert_eq!(a.point, Point2::new(3.0, 4.0));
        assert_eq!(a.residual, 0.0);
        assert_eq!(a.method, AnnotationMethod::Suspension);
    }

    #[test]
    fn parallel_lines_are_rejected() {
        let r = plumb_intersection(&line(0.0, 0.0, 1.0, 1.0), &line(5.0, 0.0, 1.0, 1.0));
        assert!(matches!(r, Err(AnnotationError::NearParallel { .. })));
        let r = plumb_intersection(&line(0.0, 0.0, 1.0, 1.0), &line(5.0, 0.0, -1.0, -1.0));
        assert!(matches!(r, Err(AnnotationError::NearParallel { .. })));
    }

    #[test]
    fn degenerate_line() {
        assert_eq!(
            PlumbLine::through(Point2::new(1.0, 1.0), Point2::new(1.0, 1.0)),
            Err(AnnotationError::DegenerateLine)
        );
    }

    #[test]
    fn centroid_cases() {
        let full = Mask::from_fn(10, 10, |_, _| true);
        assert_eq!(region_centroid(&full).unwrap().point, Point2::new(4.5, 4.5));
        let mut single = Mask::new(10, 5);
        single.set(7, 2, true);
        assert_eq!(region_centroid(&single).unwrap().point, Point2::new(7.0, 2.0));
        assert_eq!(region_centroid(&Mask::new(3, 3)), Err(AnnotationError::EmptyMask));
    }

    #[test]
    fn l_shaped_centroid_matches_composite_formula() {
        // rect A: u 0..10, v 0..3 (30 px, centroid (4.5, 1)),
        // rect B: u 0..3, v 3..10 (21 px, centroid (1, 6)).
        let mask = Mask::from_fn(12, 12, |u, v| (u < 10 && v < 3) || (u < 3 && (3..10).contains(&v)));
        let want = Point2::new((30.0 * 4.5 + 21.0 * 1.0) / 51.0, (30.0 * 1.0 + 21.0 * 6.0) / 51.0);
        let got = region_centroid(&mask).unwrap().point;
        assert!((got.x - want.x).abs() < 1e-12 && (got.y - want.y).abs() < 1e-12);
    }

    fn full_counts_manifest(dir: &Path) -> DatasetManifest {
        let mut entries = Vec::new();
        for (cat, n) in reference_counts() {
            for i in 0..n {
                entries.push(DatasetEntry {
                    category: cat.clone(),
                    image_path: format!("{cat}_{i}.png").into(),
                    suspended_image_paths: vec![],
                    annotation: CogAnnotation {
                        point: Point2::new(5.0, 5.0),
                        method: AnnotationMethod::Suspension,
                        residual: 0.0,
                    },
                    image_size: Some((64, 48)),
                });
            }
        }
        for e in &entries {
            fs::write(dir.join(&e.image_path), b"").unwrap();
        }
        DatasetManifest {
            entries,
            category_counts: BTreeMap::new(),
        }
    }

    #[test]
    fn reference_table_all_match() {
        let dir = tempfile::tempdir().unwrap();
        let m = full_counts_manifest(dir.path());
        let expected = reference_counts();
        let r = validate_dataset(&m, dir.path(), Some(&expected));
        assert!(r.all_match, "{r:?}");
        assert_eq!(r.counts["hammer"], 75);
        assert_eq!(r.counts["wrench"], 241);
        assert_eq!(r.counts["chisel"], 9);
        assert_eq!(r.total, expected.values().sum::<usize>());
    }

    #[test]
    fn reports_missing_file_and_out_of_bounds() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = full_counts_manifest(dir.path());
        fs::remove_file(dir.path().join(&m.entries[3].image_path)).unwrap();
        m.entries[7].annotation.point = Point2::new(64.0, 2.0);
        let r = validate_dataset(&m, dir.path(), None);
        assert_eq!(r.missing_files, vec![m.entries[3].image_path.clone()]);
        assert_eq!(r.flagged.len(), 1);
        assert_eq!(r.flagged[0].index, 7);
        assert!(!r.all_match);
    }

    #[test]
    fn count_mismatch_and_unknown_category() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = full_counts_manifest(dir.path());
        m.entries[0].category = "Axe".into();
        let r = validate_dataset(&m, dir.path(), Some(&reference_counts()));
        assert_eq!(r.unknown_categories, vec!["axe".to_string()]);
        assert_eq!(r.expected_mismatches.len(), 2);
    }

    #[test]
    fn parses_csv_with_header() {
        let csv = "image_id,x1,y1,x2,y2\nh1,3,0,3,10\nh1,-2,4,8,4\nw1,0,0,1,1\n";
        let out = annotate_csv(csv.as_bytes()).unwrap();
        assert_eq!(out.len(), 2);
        match &out[0].outcome {
            AnnotateOutcome::Annotation(a) => assert_eq!(a.point, Point2::new(3.0, 4.0)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(out[1].outcome, AnnotateOutcome::Error(_)));
    }

    #[test]
    fn malformed_csv_is_a_parse_error() {
        assert!(matches!(
            annotate_csv("h1,1,2,x,4\n".as_bytes()),
            Err(DatasetError::Parse { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn recovers_constructed_point(px in -500.0f64..500.0, py in -500.0f64..500.0,
                                      a1 in 0.0f64..std::f64::consts::TAU, a2 in 0.0f64..std::f64::consts::TAU,
                                      t1 in -300.0f64..300.0, t2 in -300.0f64..300.0) {
            let (d1, d2) = (Point2::new(a1.cos(), a1.sin()), Point2::new(a2.cos(), a2.sin()));
            prop_assume!(cross(d1.x, d1.y, d2.x, d2.y).abs() > 1e-3);
            let l1 = PlumbLine::new(Point2::new(px + t1 * d1.x, py + t1 * d1.y), d1).unwrap();
            let l2 = PlumbLine::new(Point2::new(px + t2 * d2.x, py + t2 * d2.y), d2).unwrap();
            let a = plumb_intersection(&l1, &l2).unwrap();
            prop_assert!(a.point.distance(&Point2::new(px, py)) < 1e-9 * (1.0 / cross(d1.x, d1.y, d2.x, d2.y).abs()).max(1.0));
            let b = plumb_intersection(&l2, &l1).unwrap();
            prop_assert!(a.point.distance(&b.point) <= 1e-12);
        }

        #[test]
        fn rotation_equivariance(ax in -50.0f64..50.0, ay in -50.0f64..50.0, bx in -50.0f64..50.0, by in -50.0f64..50.0,
                                 a1 in 0.0f64..3.1, a2 in 0.0f64..3.1, theta in -3.1f64..3.1) {
            prop_assume!((a1 - a2).abs() > 0.05 && (a1 - a2).abs() < 3.09);
            let l1 = line(ax, ay, a1.cos(), a1.sin());
            let l2 = line(bx, by, a2.cos(), a2.sin());
            let p = plumb_intersection(&l1, &l2).unwrap().point;
            let rot = |l: &PlumbLine| PlumbLine::new(l.anchor.rotated(theta), l.direction.rotated(theta)).unwrap();
            let q = plumb_intersection(&rot(&l1), &rot(&l2)).unwrap().point;
            let want = p.rotated(theta);
            prop_assert!(q.distance(&want) < 1e-9 * want.x.hypot(want.y).max(1.0));
        }
    }
}
