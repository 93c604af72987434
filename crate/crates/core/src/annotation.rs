//! Face metadata per picture, obtained from a pluggable provider: a remote
//! HTTP service, a file of precomputed annotations, or a deterministic
//! offline stub.
//!
//! "No face detected" is data, not an error; every face-dependent feature
//! downstream becomes an explicit missing value.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::imaging::{ImageBuffer, Region};

pub const ANNOTATION_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("annotation provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("annotation schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("duplicate picture id {0:?} in annotation file")]
    DuplicatePictureId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmarks {
    pub left_eye: Point,
    pub right_eye: Point,
    pub nose: Point,
    pub mouth: Point,
}

impl Landmarks {
    pub fn points(&self) -> [Point; 4] {
        [self.left_eye, self.right_eye, self.nose, self.mouth]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SexGuess {
    pub sex: Sex,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaceProbs {
    pub caucasian: f64,
    pub black: f64,
    pub asian: f64,
}

impl RaceProbs {
    pub fn sum(&self) -> f64 {
        self.caucasian + self.black + self.asian
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Glasses {
    None,
    Reading,
    Sunglasses,
}

/// Everything a provider reports for one picture. When `detected` is false
/// every other field is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceAnnotation {
    pub detected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<Region>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmarks: Option<Landmarks>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smile: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sex: Option<SexGuess>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub race: Option<RaceProbs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub glasses: Option<Glasses>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tilt_deg: Option<f64>,
}

impl FaceAnnotation {
    pub fn undetected() -> Self {
        Self {
            detected: false,
            bbox: None,
            landmarks: None,
            smile: None,
            age: None,
            sex: None,
            race: None,
            glasses: None,
            tilt_deg: None,
        }
    }

    /// Enforce the record invariants. Violations map to
    /// `MalformedResponse`; file ingest wraps them as `SchemaMismatch` with
    /// the offending picture id.
    pub fn validate(&self) -> Result<(), AnnotationError> {
        if !self.detected {
            let all_absent = self.bbox.is_none()
                && self.landmarks.is_none()
                && self.smile.is_none()
                && self.age.is_none()
                && self.sex.is_none()
                && self.race.is_none()
                && self.glasses.is_none()
                && self.tilt_deg.is_none();
            if !all_absent {
                return Err(AnnotationError::MalformedResponse(
                    "undetected face carries attribute fields".into(),
                ));
            }
            return Ok(());
        }
        let bbox = self
            .bbox
            .ok_or_else(|| AnnotationError::MalformedResponse("detected face without bbox".into()))?;
        if bbox.width() == 0 || bbox.height() == 0 {
            return Err(AnnotationError::MalformedResponse("empty bbox".into()));
        }
        let landmarks = self.landmarks.ok_or_else(|| {
            AnnotationError::MalformedResponse("detected face without complete landmarks".into())
        })?;
        let inflated = bbox.inflated(0.2);
        for p in landmarks.points() {
            if !inflated.contains(p.x, p.y) {
                return Err(AnnotationError::MalformedResponse(format!(
                    "landmark ({}, {}) outside bbox inflated by 20%",
                    p.x, p.y
                )));
            }
        }
        if let Some(race) = &self.race {
            if (race.sum() - 1.0).abs() > 1e-6 {
                return Err(AnnotationError::MalformedResponse(format!(
                    "race probabilities sum to {}, expected 1",
                    race.sum()
                )));
            }
        }
        for (name, v) in [("smile", self.smile), ("age", self.age)] {
            if let Some(v) = v {
                if !v.is_finite() || v < 0.0 {
                    return Err(AnnotationError::MalformedResponse(format!(
                        "{name} = {v} out of range"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Which provider a pipeline run draws annotations from.
#[derive(Debug, Clone)]
pub enum AnnotationSource {
    /// Face++-style HTTP endpoint.
    Remote(crate::remote::RemoteConfig),
    /// Line-delimited JSON file of precomputed annotations, keyed by
    /// picture id.
    File(PathBuf),
    /// Deterministic offline stub, seeded.
    Stub { seed: u64 },
}

/// Annotate one picture from the chosen source. File sources need the
/// picture id to look the record up.
pub fn annotate(
    image: &ImageBuffer,
    source: &AnnotationSource,
    picture_id: &str,
) -> Result<FaceAnnotation, AnnotationError> {
    match source {
        AnnotationSource::Stub { seed } => Ok(stub_annotate(image, *seed)),
        AnnotationSource::File(path) => {
            let map = parse_annotation_file(path)?;
            map.get(picture_id).cloned().ok_or_else(|| {
                AnnotationError::SchemaMismatch(format!(
                    "no annotation record for picture {picture_id:?}"
                ))
            })
        }
        AnnotationSource::Remote(config) => crate::remote::annotate_remote(image, config),
    }
}

// ---------------------------------------------------------------------------
// File ingest: line-delimited JSON, one header line then one record per line.
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct FileHeader {
    schema_version: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct FileRecord {
    picture_id: String,
    #[serde(flatten)]
    annotation: FaceAnnotation,
}

pub fn parse_annotation_file(
    path: &Path,
) -> Result<BTreeMap<String, FaceAnnotation>, AnnotationError> {
    let file = std::fs::File::open(path)
        .map_err(|e| AnnotationError::ProviderUnavailable(format!("{}: {e}", path.display())))?;
    parse_annotation_reader(std::io::BufReader::new(file))
}

pub fn parse_annotation_reader<R: BufRead>(
    reader: R,
) -> Result<BTreeMap<String, FaceAnnotation>, AnnotationError> {
    let mut lines = reader.lines();
    let header_line = match lines.next() {
        Some(line) => line.map_err(|e| AnnotationError::ProviderUnavailable(e.to_string()))?,
        None => {
            return Err(AnnotationError::SchemaMismatch(
                "empty annotation file: missing header line".into(),
            ))
        }
    };
    let header: FileHeader = serde_json::from_str(&header_line)
        .map_err(|e| AnnotationError::SchemaMismatch(format!("header: {e}")))?;
    if header.schema_version != ANNOTATION_SCHEMA_VERSION {
        return Err(AnnotationError::SchemaMismatch(format!(
            "schema_version {} unsupported (expected {})",
            header.schema_version, ANNOTATION_SCHEMA_VERSION
        )));
    }
    let mut map = BTreeMap::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| AnnotationError::ProviderUnavailable(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: FileRecord = serde_json::from_str(&line).map_err(|e| {
            AnnotationError::SchemaMismatch(format!("line {}: {e}", lineno + 2))
        })?;
        record.annotation.validate().map_err(|e| {
            AnnotationError::SchemaMismatch(format!("record {}: {e}", record.picture_id))
        })?;
        if map.contains_key(&record.picture_id) {
            return Err(AnnotationError::DuplicatePictureId(record.picture_id));
        }
        map.insert(record.picture_id, record.annotation);
    }
    Ok(map)
}

/// Write a full annotation file, header first, records sorted by picture id.
pub fn write_annotation_file(
    path: &Path,
    records: &BTreeMap<String, FaceAnnotation>,
) -> std::io::Result<()> {
    let mut out = String::new();
    out.push_str(
        &serde_json::to_string(&FileHeader {
            schema_version: ANNOTATION_SCHEMA_VERSION,
        })
        .expect("header serializes"),
    );
    out.push('\n');
    for (picture_id, annotation) in records {
        let record = FileRecord {
            picture_id: picture_id.clone(),
            annotation: annotation.clone(),
        };
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    std::fs::write(path, out)
}

// ---------------------------------------------------------------------------
// Deterministic stub
// ---------------------------------------------------------------------------

/// Detection probability the stub is calibrated to on patternless images,
/// leaving 47% of a uniform corpus without a face.
const STUB_DETECT_PER_MYRIAD: u64 = 5300;

fn stub_hash(image: &ImageBuffer, seed: u64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(image.width().to_le_bytes());
    hasher.update(image.height().to_le_bytes());
    hasher.update(image.raw_bytes());
    hasher.update(seed.to_le_bytes());
    hasher.finalize().into()
}

fn hash_u64(hash: &[u8; 32], lane: usize) -> u64 {
    let mut bytes = [0u8; 8];
    let start = (lane * 8) % 24;
    bytes.copy_from_slice(&hash[start..start + 8]);
    u64::from_le_bytes(bytes)
}

fn unit(hash: &[u8; 32], lane: usize) -> f64 {
    (hash_u64(hash, lane) % 1_000_000) as f64 / 1_000_000.0
}

/// Deterministic pseudo-annotation derived from image content and a seed.
///
/// Flat images never contain a face. Images with a compact bright blob on a
/// darker background (the fixture convention) are always detected, with the
/// bbox placed over the blob, so fixtures encode their expected geometry.
/// Everything else falls back to a content-hash coin calibrated to detect
/// 53% of a uniform corpus.
pub fn stub_annotate(image: &ImageBuffer, seed: u64) -> FaceAnnotation {
    let hash = stub_hash(image, seed);
    let lum = image.luminance_plane();
    let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for &v in &lum {
        min = min.min(v);
        max = max.max(v);
        sum += v;
    }
    let mean = sum / lum.len() as f64;
    if max - min < 2.0 / 255.0 {
        return FaceAnnotation::undetected();
    }

    let bbox = bright_blob_bbox(image, &lum, mean, max);
    match bbox {
        Some(bbox) => build_annotation(image, bbox, &hash, 0.0),
        None => {
            if hash_u64(&hash, 0) % 10_000 < STUB_DETECT_PER_MYRIAD {
                let bbox = synthetic_bbox(image, &hash);
                let tilt = (unit(&hash, 1) - 0.5) * 50.0;
                build_annotation(image, bbox, &hash, tilt)
            } else {
                FaceAnnotation::undetected()
            }
        }
    }
}

/// Bounding box of clearly-bright pixels, accepted only when it is compact
/// (5%..60% of the image) and clearly brighter than the rest. Noise images
/// spread bright pixels everywhere and are rejected by the area cap.
fn bright_blob_bbox(image: &ImageBuffer, lum: &[f64], mean: f64, max: f64) -> Option<Region> {
    let threshold = mean + 0.6 * (max - mean);
    let (w, h) = (image.width(), image.height());
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0u32, 0u32);
    let mut inside = 0u64;
    for y in 0..h {
        for x in 0..w {
            if lum[(y * w + x) as usize] >= threshold {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
                inside += 1;
            }
        }
    }
    if inside == 0 {
        return None;
    }
    let bbox = Region::new(x0, y0, x1, y1);
    let total = (w as u64) * (h as u64);
    let area_fraction = bbox.area() as f64 / total as f64;
    if !(0.05..=0.60).contains(&area_fraction) {
        return None;
    }
    // the blob must fill its box reasonably densely, unlike scattered noise
    if (inside as f64) / (bbox.area() as f64) < 0.4 {
        return None;
    }
    Some(bbox)
}

fn synthetic_bbox(image: &ImageBuffer, hash: &[u8; 32]) -> Region {
    let (w, h) = (image.width() as f64, image.height() as f64);
    let scale = 0.3 + 0.3 * unit(hash, 2);
    let bw = (w * scale).max(2.0);
    let bh = (h * scale).max(2.0);
    let max_x = (w - bw).max(0.0);
    let max_y = (h - bh).max(0.0);
    let x0 = (max_x * unit(hash, 3)) as u32;
    let y0 = (max_y * unit(hash, 4)) as u32;
    Region::new(x0, y0, x0 + bw as u32, y0 + bh as u32).clamped(image.width(), image.height())
}

fn build_annotation(
    image: &ImageBuffer,
    bbox: Region,
    hash: &[u8; 32],
    tilt_deg: f64,
) -> FaceAnnotation {
    let bw = bbox.width() as f64;
    let bh = bbox.height() as f64;
    let x = |f: f64| bbox.x0 as f64 + f * bw;
    let y = |f: f64| bbox.y0 as f64 + f * bh;
    let landmarks = Landmarks {
        left_eye: Point { x: x(0.3), y: y(0.35) },
        right_eye: Point { x: x(0.7), y: y(0.35) },
        nose: Point { x: x(0.5), y: y(0.55) },
        mouth: Point { x: x(0.5), y: y(0.75) },
    };
    let race = {
        let a = 1 + hash_u64(hash, 5) % 97;
        let b = 1 + hash_u64(hash, 6) % 97;
        let c = 1 + hash_u64(hash, 7) % 97;
        let total = (a + b + c) as f64;
        let caucasian = a as f64 / total;
        let black = b as f64 / total;
        RaceProbs {
            caucasian,
            black,
            asian: 1.0 - caucasian - black,
        }
    };
    let glasses = match hash_u64(hash, 8) % 10 {
        0..=6 => Glasses::None,
        7 | 8 => Glasses::Reading,
        _ => Glasses::Sunglasses,
    };
    let annotation = FaceAnnotation {
        detected: true,
        bbox: Some(bbox),
        landmarks: Some(landmarks),
        smile: Some(unit(hash, 9)),
        age: Some(18.0 + (hash_u64(hash, 10) % 45) as f64),
        sex: Some(SexGuess {
            sex: if hash_u64(hash, 11).is_multiple_of(2) {
                Sex::Female
            } else {
                Sex::Male
            },
            confidence: 0.6 + 0.4 * unit(hash, 12),
        }),
        race: Some(race),
        glasses: Some(glasses),
        tilt_deg: Some(tilt_deg),
    };
    debug_assert!(annotation.validate().is_ok());
    let _ = image;
    annotation
}
