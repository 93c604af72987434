//! Dataset layout, run configuration, and the staged workflow: ingestion,
//! extraction with content-hash caching, aggregation, clustering,
//! correlation, prediction, and report bundles.
//!
//! Every stage is deterministic for a fixed (dataset, config, seed) triple:
//! parallel work collects in input order, machine outputs carry no
//! timestamps, and all randomness derives from the run seed.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aggregate::{
    aggregate_place, profiles_to_csv, PlaceProfile, ProfileFile, GROUP_SIZE,
    MIN_PARTIAL_GROUP,
};
use crate::annotation::{parse_annotation_file, FaceAnnotation};
use crate::cluster::{
    apply_relabel, default_relabel_config, parse_relabel_config, select_k, target_scores,
    ClusterArrangement, TargetMode, TargetScores, DEFAULT_K_CANDIDATES,
};
use crate::features::eigenfaces::EigenfacesModel;
use crate::features::face::CorpusStats;
use crate::imaging::decode_image;
use crate::manifest::MANIFEST_VERSION;
use crate::predict::{compare, evaluate_all, ComparisonTable, PlaceVector, PredictionReport};
use crate::ratings::{parse_ratings_csv, RatingSet, RatingsTable};
use crate::registry::{FeatureRegistry, PictureFeatures};
use crate::remote::RemoteConfig;
use crate::stats::{correlation_matrix, CorrelationMatrix};

#[derive(Debug, Error)]
#[error("{stage}: {message}")]
pub struct StageError {
    pub stage: &'static str,
    pub message: String,
}

fn stage_err(stage: &'static str, message: impl std::fmt::Display) -> StageError {
    StageError {
        stage,
        message: message.to_string(),
    }
}

/// Which annotation provider a run uses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationKind {
    Remote,
    File,
    Stub,
}

impl AnnotationKind {
    pub fn label(&self) -> &'static str {
        match self {
            AnnotationKind::Remote => "remote",
            AnnotationKind::File => "file",
            AnnotationKind::Stub => "stub",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub annotations: AnnotationKind,
    pub alpha: f64,
    pub target_mode: TargetMode,
    pub allow_partial: bool,
    pub k_candidates: Vec<usize>,
    /// Not serialized: artifacts must be byte-identical wherever the output
    /// directory lives.
    #[serde(skip, default)]
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            seed: 0,
            annotations: AnnotationKind::Stub,
            alpha: 0.05,
            target_mode: TargetMode::Target,
            allow_partial: false,
            k_candidates: DEFAULT_K_CANDIDATES.to_vec(),
            out_dir: out_dir.into(),
        }
    }

    fn comment(&self) -> String {
        format!("seed={} manifest={MANIFEST_VERSION}", self.seed)
    }
}

/// Root directory of a dataset: `places/<id>/pics/*.png`, `ratings.csv`,
/// optional `annotations.jsonl` and `relabel.conf`.
#[derive(Debug, Clone)]
pub struct DatasetLayout {
    pub root: PathBuf,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn ratings_path(&self) -> PathBuf {
        self.root.join("ratings.csv")
    }

    pub fn annotations_path(&self) -> PathBuf {
        self.root.join("annotations.jsonl")
    }

    pub fn relabel_path(&self) -> PathBuf {
        self.root.join("relabel.conf")
    }

    pub fn dataset_config_path(&self) -> PathBuf {
        self.root.join("dataset.toml")
    }

    /// Optional dataset-level pin: `manifest_version = "<v>"`. Datasets
    /// prepared under a different manifest refuse to mix with this build.
    pub fn pinned_manifest_version(&self) -> Option<String> {
        let text = std::fs::read_to_string(self.dataset_config_path()).ok()?;
        for line in text.lines() {
            let line = line.trim();
            if let Some(value) = line.strip_prefix("manifest_version") {
                let value = value.trim_start().strip_prefix('=')?.trim();
                return Some(value.trim_matches('"').to_string());
            }
        }
        None
    }

    /// Sorted (place_id, sorted picture paths) pairs.
    pub fn places(&self) -> std::io::Result<Vec<(String, Vec<PathBuf>)>> {
        let places_dir = self.root.join("places");
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&places_dir)? {
            let entry = entry?;
            if !entry.file_type()?.is_dir() {
                continue;
            }
            let place_id = entry.file_name().to_string_lossy().to_string();
            let pics_dir = entry.path().join("pics");
            let mut pics = Vec::new();
            if pics_dir.is_dir() {
                for pic in std::fs::read_dir(&pics_dir)? {
                    let pic = pic?.path();
                    let ext = pic
                        .extension()
                        .map(|e| e.to_string_lossy().to_ascii_lowercase());
                    if matches!(ext.as_deref(), Some("png") | Some("jpg") | Some("jpeg")) {
                        pics.push(pic);
                    }
                }
            }
            pics.sort();
            out.push((place_id, pics));
        }
        out.sort();
        Ok(out)
    }
}

pub fn picture_id(place_id: &str, path: &Path) -> String {
    format!(
        "{place_id}/{}",
        path.file_stem().unwrap_or_default().to_string_lossy()
    )
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct Finding {
    pub location: String,
    pub message: String,
}

/// Check layout invariants, annotation schema, ratings coverage, and
/// manifest consistency of any existing outputs. Findings are data; an
/// empty list means the dataset is clean.
pub fn validate(layout: &DatasetLayout, config: &RunConfig) -> Vec<Finding> {
    let mut findings = Vec::new();
    let mut finding = |location: String, message: String| {
        findings.push(Finding { location, message });
    };

    let places = match layout.places() {
        Ok(places) if !places.is_empty() => places,
        Ok(_) => {
            finding(
                layout.root.display().to_string(),
                "no place directories under places/".into(),
            );
            Vec::new()
        }
        Err(e) => {
            finding(layout.root.display().to_string(), format!("places/: {e}"));
            Vec::new()
        }
    };
    let min = if config.allow_partial {
        MIN_PARTIAL_GROUP
    } else {
        GROUP_SIZE
    };
    for (place_id, pics) in &places {
        if pics.len() < min || (!config.allow_partial && pics.len() != GROUP_SIZE) {
            finding(
                format!("places/{place_id}"),
                format!(
                    "{} pictures; expected {}",
                    pics.len(),
                    if config.allow_partial {
                        format!(">= {MIN_PARTIAL_GROUP}")
                    } else {
                        format!("exactly {GROUP_SIZE}")
                    }
                ),
            );
        }
    }

    match std::fs::read_to_string(layout.ratings_path()) {
        Ok(text) => match parse_ratings_csv(&text) {
            Ok(table) => {
                let rated: std::collections::BTreeSet<_> = table.place_ids().into_iter().collect();
                for (place_id, _) in &places {
                    for set in [RatingSet::FaceDriven, RatingSet::OnTheSpot] {
                        if !table
                            .rows
                            .iter()
                            .any(|r| r.place_id == *place_id && r.rating_set == set)
                        {
                            finding(
                                "ratings.csv".into(),
                                format!("place {place_id:?} has no {} row", set.label()),
                            );
                        }
                    }
                }
                for id in rated {
                    if !places.iter().any(|(p, _)| *p == id) {
                        finding(
                            "ratings.csv".into(),
                            format!("ratings for unknown place {id:?}"),
                        );
                    }
                }
            }
            Err(e) => finding("ratings.csv".into(), e.to_string()),
        },
        Err(e) => finding("ratings.csv".into(), e.to_string()),
    }

    if layout.annotations_path().exists() {
        match parse_annotation_file(&layout.annotations_path()) {
            Ok(map) => {
                let known: std::collections::BTreeSet<String> = places
                    .iter()
                    .flat_map(|(place_id, pics)| {
                        pics.iter().map(move |p| picture_id(place_id, p))
                    })
                    .collect();
                for id in map.keys() {
                    if !known.contains(id) {
                        finding(
                            "annotations.jsonl".into(),
                            format!("annotation for unknown picture {id:?}"),
                        );
                    }
                }
            }
            Err(e) => finding("annotations.jsonl".into(), e.to_string()),
        }
    }

    if layout.relabel_path().exists() {
        if let Err(e) =
            std::fs::read_to_string(layout.relabel_path()).map_err(|e| e.to_string()).and_then(
                |text| parse_relabel_config(&text).map(|_| ()).map_err(|e| e.to_string()),
            )
        {
            finding("relabel.conf".into(), e);
        }
    }

    if let Some(pinned) = layout.pinned_manifest_version() {
        if pinned != MANIFEST_VERSION {
            finding(
                "dataset.toml".into(),
                format!("dataset pins manifest {pinned}, this build is {MANIFEST_VERSION}"),
            );
        }
    }

    let summary_path = config.out_dir.join("run_summary.json");
    if let Ok(text) = std::fs::read_to_string(&summary_path) {
        if let Ok(summary) = serde_json::from_str::<RunSummary>(&text) {
            if summary.manifest_version != MANIFEST_VERSION {
                finding(
                    summary_path.display().to_string(),
                    format!(
                        "existing outputs use manifest {}, this build is {MANIFEST_VERSION}",
                        summary.manifest_version
                    ),
                );
            }
        }
    }
    findings
}

// ---------------------------------------------------------------------------
// Extraction with content-hash caching
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct FeatureFileHeader {
    manifest_version: String,
    /// Hash over (manifest, annotation source, seed, every picture hash):
    /// any change invalidates the whole place file because corpus
    /// statistics shift.
    fingerprint: String,
}

enum Provider {
    Stub(u64),
    Map(BTreeMap<String, FaceAnnotation>),
    Remote(Box<RemoteConfig>),
}

impl Provider {
    fn annotate(
        &self,
        image: &crate::imaging::ImageBuffer,
        picture: &str,
    ) -> Result<FaceAnnotation, String> {
        match self {
            Provider::Stub(seed) => Ok(crate::annotation::stub_annotate(image, *seed)),
            Provider::Map(map) => map
                .get(picture)
                .cloned()
                .ok_or_else(|| format!("no annotation record for picture {picture:?}")),
            Provider::Remote(config) => {
                crate::remote::annotate_remote(image, config).map_err(|e| e.to_string())
            }
        }
    }
}

fn resolve_provider(layout: &DatasetLayout, config: &RunConfig) -> Result<Provider, StageError> {
    match config.annotations {
        AnnotationKind::Stub => Ok(Provider::Stub(config.seed)),
        AnnotationKind::File => parse_annotation_file(&layout.annotations_path())
            .map(Provider::Map)
            .map_err(|e| stage_err("extract", e)),
        AnnotationKind::Remote => RemoteConfig::from_env()
            .map(|c| Provider::Remote(Box::new(c)))
            .map_err(|e| stage_err("extract", e)),
    }
}

pub struct ExtractOutcome {
    /// (place id, per-picture records), sorted by place then picture id.
    pub features: Vec<(String, Vec<PictureFeatures>)>,
    pub recomputed: usize,
    pub reused: usize,
}

/// Extract features for every picture, reusing any cached records whose
/// content hash, manifest version, and run fingerprint still match.
pub fn run_extract(layout: &DatasetLayout, config: &RunConfig) -> Result<ExtractOutcome, StageError> {
    let places = layout
        .places()
        .map_err(|e| stage_err("extract", format!("dataset layout: {e}")))?;
    if places.is_empty() {
        return Err(stage_err("extract", "no place directories found"));
    }
    let min = if config.allow_partial {
        MIN_PARTIAL_GROUP
    } else {
        GROUP_SIZE
    };
    for (place_id, pics) in &places {
        let acceptable =
            pics.len() == GROUP_SIZE || (config.allow_partial && pics.len() >= min);
        if !acceptable {
            return Err(stage_err(
                "extract",
                format!("place {place_id:?} has {} pictures, expected {GROUP_SIZE}", pics.len()),
            ));
        }
    }
    let provider = resolve_provider(layout, config)?;

    // hash every picture file up front; the run fingerprint covers them all
    type HashedPlace = (String, Vec<(PathBuf, String, String)>);
    let hashed: Vec<HashedPlace> = places
        .iter()
        .map(|(place_id, pics)| {
            let entries = pics
                .iter()
                .map(|path| {
                    let bytes = std::fs::read(path)
                        .map_err(|e| stage_err("extract", format!("{}: {e}", path.display())))?;
                    let hash = format!("{:x}", Sha256::digest(&bytes));
                    Ok((path.clone(), picture_id(place_id, path), hash))
                })
                .collect::<Result<Vec<_>, StageError>>()?;
            Ok((place_id.clone(), entries))
        })
        .collect::<Result<_, StageError>>()?;

    let fingerprint = {
        let mut hasher = Sha256::new();
        hasher.update(MANIFEST_VERSION.as_bytes());
        hasher.update(config.annotations.label().as_bytes());
        hasher.update(config.seed.to_le_bytes());
        for (place_id, entries) in &hashed {
            hasher.update(place_id.as_bytes());
            for (_, pic_id, hash) in entries {
                hasher.update(pic_id.as_bytes());
                hasher.update(hash.as_bytes());
            }
        }
        format!("{:x}", Sha256::digest(hasher.finalize()))
    };

    let features_dir = config.out_dir.join("features");
    std::fs::create_dir_all(&features_dir)
        .map_err(|e| stage_err("extract", format!("{}: {e}", features_dir.display())))?;

    // load reusable records per place
    let mut cached: BTreeMap<String, BTreeMap<String, PictureFeatures>> = BTreeMap::new();
    for (place_id, _) in &hashed {
        let path = features_dir.join(format!("{place_id}.jsonl"));
        let Ok(text) = std::fs::read_to_string(&path) else {
            continue;
        };
        let mut lines = text.lines();
        let Some(header_line) = lines.next() else { continue };
        let Ok(header) = serde_json::from_str::<FeatureFileHeader>(header_line) else {
            continue;
        };
        if header.manifest_version != MANIFEST_VERSION || header.fingerprint != fingerprint {
            continue;
        }
        let mut records = BTreeMap::new();
        for line in lines {
            if let Ok(record) = serde_json::from_str::<PictureFeatures>(line) {
                records.insert(record.picture_id.clone(), record);
            }
        }
        cached.insert(place_id.clone(), records);
    }

    // pass 1: decode + visual/face extraction for pictures without a valid
    // cached record
    struct Fresh {
        picture_id: String,
        content_hash: String,
        visual: crate::features::visual::VisualFeatures,
        face: crate::features::face::FaceFeatures,
    }
    let work: Vec<(String, PathBuf, String, String)> = hashed
        .iter()
        .flat_map(|(place_id, entries)| {
            entries.iter().filter_map(|(path, pic_id, hash)| {
                let hit = cached
                    .get(place_id)
                    .and_then(|m| m.get(pic_id))
                    .is_some_and(|r| r.content_hash == *hash);
                if hit {
                    None
                } else {
                    Some((place_id.clone(), path.clone(), pic_id.clone(), hash.clone()))
                }
            })
        })
        .collect();
    let model = EigenfacesModel::bundled();
    let fresh: Vec<Fresh> = work
        .par_iter()
        .map(|(_place, path, pic_id, hash)| {
            let bytes = std::fs::read(path)
                .map_err(|e| stage_err("extract", format!("{pic_id}: {e}")))?;
            let image =
                decode_image(&bytes).map_err(|e| stage_err("extract", format!("{pic_id}: {e}")))?;
            let annotation = provider
                .annotate(&image, pic_id)
                .map_err(|e| stage_err("extract", format!("{pic_id}: {e}")))?;
            let visual = crate::features::visual::extract_visual(&image)
                .map_err(|e| stage_err("extract", format!("{pic_id}: {e}")))?;
            let face = crate::features::face::extract_face(&image, &annotation, &model)
                .map_err(|e| stage_err("extract", format!("{pic_id}: {e}")))?;
            Ok(Fresh {
                picture_id: pic_id.clone(),
                content_hash: hash.clone(),
                visual,
                face,
            })
        })
        .collect::<Result<_, StageError>>()?;

    // corpus statistics over every picture's visual sub-vector
    let registry = FeatureRegistry::standard();
    let visual_indices: Vec<usize> = registry
        .descriptors()
        .iter()
        .enumerate()
        .filter(|(_, d)| d.origin == "visual")
        .map(|(i, _)| i)
        .collect();
    let mut visual_vectors: Vec<Vec<f64>> = Vec::new();
    for (place_id, entries) in &hashed {
        for (_, pic_id, hash) in entries {
            if let Some(record) = cached.get(place_id).and_then(|m| m.get(pic_id)) {
                if record.content_hash == *hash {
                    visual_vectors.push(
                        visual_indices
                            .iter()
                            .map(|&i| record.values[i].value().unwrap_or(0.0))
                            .collect(),
                    );
                    continue;
                }
            }
            let f = fresh
                .iter()
                .find(|f| f.picture_id == *pic_id)
                .expect("fresh record for cache miss");
            visual_vectors.push(crate::aggregate::visual_vector(&f.visual));
        }
    }
    let stats = CorpusStats::from_vectors(&visual_vectors)
        .map_err(|e| stage_err("extract", format!("corpus statistics: {e}")))?;

    // pass 2: assemble records (uniqueness needs the corpus statistics)
    let recomputed = fresh.len();
    let mut fresh_by_id: BTreeMap<String, Fresh> = fresh
        .into_iter()
        .map(|f| (f.picture_id.clone(), f))
        .collect();
    let mut features: Vec<(String, Vec<PictureFeatures>)> = Vec::new();
    let mut reused = 0usize;
    for (place_id, entries) in &hashed {
        let mut records = Vec::with_capacity(entries.len());
        for (_, pic_id, hash) in entries {
            if let Some(record) = cached.get(place_id).and_then(|m| m.get(pic_id)) {
                if record.content_hash == *hash {
                    reused += 1;
                    records.push(record.clone());
                    continue;
                }
            }
            let f = fresh_by_id.remove(pic_id).expect("fresh record");
            let unique =
                crate::features::face::uniqueness(&crate::aggregate::visual_vector(&f.visual), &stats)
                    .map_err(|e| stage_err("extract", format!("{pic_id}: {e}")))?;
            let record = crate::aggregate::assemble_features(
                &f.picture_id,
                &f.content_hash,
                &f.visual,
                &f.face,
                Some(unique),
            );
            record
                .validate(&registry)
                .map_err(|e| stage_err("extract", format!("{pic_id}: {e}")))?;
            records.push(record);
        }
        features.push((place_id.clone(), records));
    }

    // write per-place feature files, header first, records sorted
    for (place_id, records) in &features {
        let path = features_dir.join(format!("{place_id}.jsonl"));
        let mut text = serde_json::to_string(&FeatureFileHeader {
            manifest_version: MANIFEST_VERSION.to_string(),
            fingerprint: fingerprint.clone(),
        })
        .expect("header serializes");
        text.push('\n');
        for record in records {
            text.push_str(&serde_json::to_string(record).expect("record serializes"));
            text.push('\n');
        }
        std::fs::write(&path, text)
            .map_err(|e| stage_err("extract", format!("{}: {e}", path.display())))?;
    }
    std::fs::write(config.out_dir.join("manifest.json"), crate::manifest::render())
        .map_err(|e| stage_err("extract", e))?;

    Ok(ExtractOutcome {
        features,
        recomputed,
        reused,
    })
}

pub fn load_features(config: &RunConfig) -> Result<Vec<(String, Vec<PictureFeatures>)>, StageError> {
    let features_dir = config.out_dir.join("features");
    let mut out = Vec::new();
    let entries = std::fs::read_dir(&features_dir)
        .map_err(|e| stage_err("aggregate", format!("features not found (run extract first): {e}")))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    paths.sort();
    for path in paths {
        let place_id = path.file_stem().unwrap().to_string_lossy().to_string();
        let text = std::fs::read_to_string(&path)
            .map_err(|e| stage_err("aggregate", format!("{}: {e}", path.display())))?;
        let mut lines = text.lines();
        let header: FeatureFileHeader = lines
            .next()
            .ok_or_else(|| stage_err("aggregate", format!("{}: empty", path.display())))
            .and_then(|l| {
                serde_json::from_str(l)
                    .map_err(|e| stage_err("aggregate", format!("{}: {e}", path.display())))
            })?;
        crate::manifest::check_version(&header.manifest_version)
            .map_err(|e| stage_err("aggregate", e))?;
        let mut records = Vec::new();
        for line in lines {
            let record: PictureFeatures = serde_json::from_str(line)
                .map_err(|e| stage_err("aggregate", format!("{}: {e}", path.display())))?;
            records.push(record);
        }
        records.sort_by(|a, b| a.picture_id.cmp(&b.picture_id));
        out.push((place_id, records));
    }
    if out.is_empty() {
        return Err(stage_err("aggregate", "features directory is empty (run extract first)"));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Aggregate stage
// ---------------------------------------------------------------------------

pub fn run_aggregate(
    features: &[(String, Vec<PictureFeatures>)],
    config: &RunConfig,
) -> Result<Vec<PlaceProfile>, StageError> {
    let profiles: Vec<PlaceProfile> = features
        .iter()
        .map(|(place_id, records)| {
            aggregate_place(place_id, records, config.allow_partial)
                .map_err(|e| stage_err("aggregate", e))
        })
        .collect::<Result<_, _>>()?;
    let file = ProfileFile {
        manifest_version: MANIFEST_VERSION.to_string(),
        seed: config.seed,
        profiles: profiles.clone(),
    };
    write_out(config, "profiles.json", &serde_json::to_string_pretty(&file).unwrap())?;
    write_out(config, "profiles.csv", &profiles_to_csv(&profiles, &config.comment()))?;
    Ok(profiles)
}

pub fn load_profiles(config: &RunConfig) -> Result<Vec<PlaceProfile>, StageError> {
    let path = config.out_dir.join("profiles.json");
    let text = std::fs::read_to_string(&path).map_err(|e| {
        stage_err("stats-analysis", format!("profiles not found (run aggregate first): {e}"))
    })?;
    let file: ProfileFile =
        serde_json::from_str(&text).map_err(|e| stage_err("stats-analysis", e))?;
    crate::manifest::check_version(&file.manifest_version)
        .map_err(|e| stage_err("stats-analysis", e))?;
    Ok(file.profiles)
}

// ---------------------------------------------------------------------------
// Clustering + target scores
// ---------------------------------------------------------------------------

pub fn load_ratings(layout: &DatasetLayout) -> Result<RatingsTable, StageError> {
    let path = layout.ratings_path();
    let text = std::fs::read_to_string(&path)
        .map_err(|e| stage_err("ambiance-model", format!("ratings not found: {e}")))?;
    parse_ratings_csv(&text).map_err(|e| stage_err("ambiance-model", e))
}

pub struct ClusterOutcome {
    pub raw: ClusterArrangement,
    pub relabeled: ClusterArrangement,
    pub face_driven: Vec<TargetScores>,
    pub on_the_spot: Vec<TargetScores>,
}

/// Cluster the 72 dimensions (each expressed as its vector of face-driven
/// ratings across places), apply the relabel config, and emit target
/// scores for both rating sets.
pub fn run_cluster(
    layout: &DatasetLayout,
    config: &RunConfig,
    table: &RatingsTable,
) -> Result<ClusterOutcome, StageError> {
    let mut face_rows = table.rows_for(RatingSet::FaceDriven);
    face_rows.sort_by(|a, b| a.place_id.cmp(&b.place_id));
    if face_rows.is_empty() {
        return Err(stage_err("ambiance-model", "no face_driven rating rows"));
    }
    // dimension points in place-space
    let points: Vec<Vec<f64>> = (0..table.dimensions.len())
        .map(|d| face_rows.iter().map(|r| r.values[d]).collect())
        .collect();
    let raw = select_k(&points, &table.dimensions, &config.k_candidates, config.seed)
        .map_err(|e| stage_err("ambiance-model", e))?;

    let relabel = if layout.relabel_path().exists() {
        let text = std::fs::read_to_string(layout.relabel_path())
            .map_err(|e| stage_err("ambiance-model", e))?;
        parse_relabel_config(&text).map_err(|e| stage_err("ambiance-model", e))?
    } else {
        default_relabel_config()
    };
    let relabeled = apply_relabel(&raw, &relabel).map_err(|e| stage_err("ambiance-model", e))?;

    let mut face_driven = Vec::new();
    let mut on_the_spot = Vec::new();
    let mut rows: Vec<&crate::ratings::AmbianceRatings> = table.rows.iter().collect();
    rows.sort_by(|a, b| (a.place_id.as_str(), a.rating_set.label())
        .cmp(&(b.place_id.as_str(), b.rating_set.label())));
    for row in rows {
        let scores = target_scores(row, &table.dimensions, &relabeled, config.target_mode)
            .map_err(|e| stage_err("ambiance-model", e))?;
        match row.rating_set {
            RatingSet::FaceDriven => face_driven.push(scores),
            RatingSet::OnTheSpot => on_the_spot.push(scores),
        }
    }

    write_out(config, "arrangement_raw.json", &serde_json::to_string_pretty(&raw).unwrap())?;
    write_out(config, "arrangement.json", &serde_json::to_string_pretty(&relabeled).unwrap())?;
    write_targets(config, "targets_face_driven", &relabeled, &face_driven)?;
    write_targets(config, "targets_on_the_spot", &relabeled, &on_the_spot)?;
    Ok(ClusterOutcome {
        raw,
        relabeled,
        face_driven,
        on_the_spot,
    })
}

fn write_targets(
    config: &RunConfig,
    name: &str,
    arrangement: &ClusterArrangement,
    targets: &[TargetScores],
) -> Result<(), StageError> {
    let mut csv = String::new();
    csv.push_str(&format!("# {}\n", config.comment()));
    csv.push_str("place_id");
    for cluster in &arrangement.clusters {
        csv.push(',');
        csv.push_str(&cluster.name);
    }
    csv.push('\n');
    for row in targets {
        csv.push_str(&row.place_id);
        for v in &row.values {
            csv.push(',');
            csv.push_str(&v.to_string());
        }
        csv.push('\n');
    }
    write_out(config, &format!("{name}.csv"), &csv)?;
    write_out(
        config,
        &format!("{name}.json"),
        &serde_json::to_string_pretty(&targets).unwrap(),
    )
}

pub fn load_arrangement(config: &RunConfig) -> Result<ClusterArrangement, StageError> {
    let path = config.out_dir.join("arrangement.json");
    let text = std::fs::read_to_string(&path).map_err(|e| {
        stage_err("ambiance-model", format!("arrangement not found (run cluster first): {e}"))
    })?;
    serde_json::from_str(&text).map_err(|e| stage_err("ambiance-model", e))
}

pub fn load_targets(config: &RunConfig, name: &str) -> Result<Vec<TargetScores>, StageError> {
    let path = config.out_dir.join(format!("{name}.json"));
    let text = std::fs::read_to_string(&path).map_err(|e| {
        stage_err("ambiance-model", format!("{name} not found (run cluster first): {e}"))
    })?;
    serde_json::from_str(&text).map_err(|e| stage_err("ambiance-model", e))
}

// ---------------------------------------------------------------------------
// Correlation + prediction + comparison stages
// ---------------------------------------------------------------------------

pub fn run_correlate(
    profiles: &[PlaceProfile],
    outcome_face: &[TargetScores],
    outcome_spot: &[TargetScores],
    cluster_names: &[String],
    config: &RunConfig,
) -> Result<(CorrelationMatrix, CorrelationMatrix), StageError> {
    let people = correlation_matrix(profiles, outcome_face, cluster_names, config.alpha)
        .map_err(|e| stage_err("stats-analysis", e))?;
    let algorithm = correlation_matrix(profiles, outcome_spot, cluster_names, config.alpha)
        .map_err(|e| stage_err("stats-analysis", e))?;
    for (matrix, name, title) in [
        (&people, "face_driven", "features vs face-driven ambiance"),
        (&algorithm, "on_the_spot", "features vs on-the-spot ambiance"),
    ] {
        let (rho, p, n) = crate::report::matrix_csvs(matrix, &config.comment());
        write_out(config, &format!("correlations_{name}_rho.csv"), &rho)?;
        write_out(config, &format!("correlations_{name}_p.csv"), &p)?;
        write_out(config, &format!("correlations_{name}_n.csv"), &n)?;
        write_out(
            config,
            &format!("correlations_{name}.svg"),
            &crate::report::heatmap_svg(matrix, title),
        )?;
        write_out(
            config,
            &format!("correlations_{name}.json"),
            &serde_json::to_string(matrix).unwrap(),
        )?;
    }
    Ok((people, algorithm))
}

pub fn load_matrix(config: &RunConfig, name: &str) -> Result<CorrelationMatrix, StageError> {
    let path = config.out_dir.join(format!("correlations_{name}.json"));
    let text = std::fs::read_to_string(&path).map_err(|e| {
        stage_err("compare", format!("correlations not found (run correlate first): {e}"))
    })?;
    serde_json::from_str(&text).map_err(|e| stage_err("compare", e))
}

pub fn run_predict(
    profiles: &[PlaceProfile],
    on_the_spot: &[TargetScores],
    cluster_names: &[String],
    config: &RunConfig,
) -> Result<PredictionReport, StageError> {
    let vectors: Vec<PlaceVector> = profiles.iter().map(PlaceVector::from_profile).collect();
    let labels = FeatureRegistry::standard().place_vector_labels();
    let report = evaluate_all(&vectors, on_the_spot, cluster_names, &labels)
        .map_err(|e| stage_err("prediction", e))?;
    write_out(config, "predictions.csv", &crate::report::prediction_csv(&report, &config.comment()))?;
    write_out(config, "predictions.json", &serde_json::to_string_pretty(&report).unwrap())?;
    write_out(
        config,
        "prediction_errors.svg",
        &crate::report::error_bars_svg(&report, "leave-one-out percent MSE per ambiance dimension"),
    )?;
    Ok(report)
}

pub fn load_report(config: &RunConfig) -> Result<PredictionReport, StageError> {
    let path = config.out_dir.join("predictions.json");
    let text = std::fs::read_to_string(&path).map_err(|e| {
        stage_err("compare", format!("predictions not found (run predict first): {e}"))
    })?;
    serde_json::from_str(&text).map_err(|e| stage_err("compare", e))
}

#[allow(clippy::too_many_arguments)]
pub fn run_compare(
    face_driven: &[TargetScores],
    on_the_spot: &[TargetScores],
    cluster_names: &[String],
    report: &PredictionReport,
    people_matrix: &CorrelationMatrix,
    algorithm_matrix: &CorrelationMatrix,
    config: &RunConfig,
) -> Result<ComparisonTable, StageError> {
    let table = compare(
        face_driven,
        on_the_spot,
        cluster_names,
        report,
        people_matrix,
        algorithm_matrix,
        config.alpha,
    )
    .map_err(|e| stage_err("compare", e))?;
    write_out(config, "comparison.md", &crate::report::comparison_markdown(&table))?;
    write_out(config, "comparison.csv", &crate::report::comparison_csv(&table, &config.comment()))?;
    Ok(table)
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub manifest_version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub places: usize,
    pub pictures: usize,
    pub selected_k: usize,
    pub raw_silhouette: f64,
}

/// Run every stage and write the full report bundle. On failure a FAILED
/// marker naming the stage is left in the output directory; completed
/// artifacts stay in place.
pub fn run_pipeline(layout: &DatasetLayout, config: &RunConfig) -> Result<RunSummary, StageError> {
    std::fs::create_dir_all(&config.out_dir)
        .map_err(|e| stage_err("extract", format!("{}: {e}", config.out_dir.display())))?;
    let failed_marker = config.out_dir.join("FAILED");
    let _ = std::fs::remove_file(&failed_marker);
    match run_pipeline_inner(layout, config) {
        Ok(summary) => Ok(summary),
        Err(e) => {
            let mut marker = std::fs::File::create(&failed_marker)
                .map_err(|io| stage_err("report", format!("cannot write FAILED marker: {io}")))?;
            let _ = writeln!(marker, "{e}");
            Err(e)
        }
    }
}

fn run_pipeline_inner(layout: &DatasetLayout, config: &RunConfig) -> Result<RunSummary, StageError> {
    // fail fast if the registry contract is off
    assert_eq!(FeatureRegistry::standard().len(), 64);
    assert_eq!(crate::registry::PLACE_VECTOR_LEN, 129);
    let ratings = load_ratings(layout)?;
    let extraction = run_extract(layout, config)?;
    let profiles = run_aggregate(&extraction.features, config)?;
    let clusters = run_cluster(layout, config, &ratings)?;
    let names = clusters.relabeled.cluster_names();
    let (people_matrix, algorithm_matrix) = run_correlate(
        &profiles,
        &clusters.face_driven,
        &clusters.on_the_spot,
        &names,
        config,
    )?;
    let report = run_predict(&profiles, &clusters.on_the_spot, &names, config)?;
    run_compare(
        &clusters.face_driven,
        &clusters.on_the_spot,
        &names,
        &report,
        &people_matrix,
        &algorithm_matrix,
        config,
    )?;
    let summary = RunSummary {
        manifest_version: MANIFEST_VERSION.to_string(),
        seed: config.seed,
        config: config.clone(),
        places: extraction.features.len(),
        pictures: extraction.features.iter().map(|(_, f)| f.len()).sum(),
        selected_k: clusters.raw.k,
        raw_silhouette: clusters.raw.silhouette,
    };
    write_out(config, "run_summary.json", &serde_json::to_string_pretty(&summary).unwrap())?;
    Ok(summary)
}

fn write_out(config: &RunConfig, name: &str, content: &str) -> Result<(), StageError> {
    std::fs::create_dir_all(&config.out_dir)
        .map_err(|e| stage_err("report", format!("{}: {e}", config.out_dir.display())))?;
    let path = config.out_dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| stage_err("report", format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_demo_dataset;

    fn demo(places: usize, seed: u64) -> (tempfile::TempDir, DatasetLayout) {
        let dir = tempfile::tempdir().unwrap();
        generate_demo_dataset(dir.path(), places, GROUP_SIZE, seed).unwrap();
        let layout = DatasetLayout::new(dir.path());
        (dir, layout)
    }

    #[test]
    fn validate_clean_dataset_has_no_findings() {
        let (dir, layout) = demo(2, 3);
        let mut config = RunConfig::new(dir.path().join("out"));
        config.allow_partial = true;
        let findings = validate(&layout, &config);
        assert!(findings.is_empty(), "{findings:?}");
    }

    #[test]
    fn validate_flags_short_places_and_unknown_ratings() {
        let (dir, layout) = demo(2, 4);
        // drop pictures from one place
        let pics = dir.path().join("places/place_00/pics");
        for i in 10..GROUP_SIZE {
            std::fs::remove_file(pics.join(format!("pic_{i:02}.png"))).unwrap();
        }
        // add a ratings row for a place that does not exist
        let ratings_path = layout.ratings_path();
        let mut text = std::fs::read_to_string(&ratings_path).unwrap();
        let extra = text
            .lines()
            .nth(2)
            .unwrap()
            .replacen("place_00", "ghost_place", 1);
        text.push_str(&extra);
        text.push('\n');
        std::fs::write(&ratings_path, text).unwrap();

        let config = RunConfig::new(dir.path().join("out"));
        let findings = validate(&layout, &config);
        assert!(findings.iter().any(|f| f.location.contains("place_00")));
        assert!(findings
            .iter()
            .any(|f| f.message.contains("ghost_place")));
    }

    #[test]
    fn extract_caches_by_content_hash() {
        let (dir, layout) = demo(2, 5);
        let mut config = RunConfig::new(dir.path().join("out"));
        config.allow_partial = true;
        let first = run_extract(&layout, &config).unwrap();
        assert_eq!(first.reused, 0);
        assert_eq!(first.recomputed, 2 * GROUP_SIZE);
        let features_file = config.out_dir.join("features/place_00.jsonl");
        let before = std::fs::read(&features_file).unwrap();

        let second = run_extract(&layout, &config).unwrap();
        assert_eq!(second.recomputed, 0, "rerun must not recompute");
        assert_eq!(second.reused, 2 * GROUP_SIZE);
        let after = std::fs::read(&features_file).unwrap();
        assert_eq!(before, after, "rerun changed bytes");

        // a content change reruns everything (corpus stats shift)
        let target = dir.path().join("places/place_00/pics/pic_00.png");
        std::fs::write(
            &target,
            crate::imaging::encode_png(&crate::imaging::ImageBuffer::solid(64, 64, [9, 9, 9])),
        )
        .unwrap();
        let third = run_extract(&layout, &config).unwrap();
        assert_eq!(third.recomputed, 2 * GROUP_SIZE);
    }

    #[test]
    fn resumed_extraction_matches_uninterrupted() {
        let (dir, layout) = demo(2, 6);
        let mut config = RunConfig::new(dir.path().join("out"));
        config.allow_partial = true;
        run_extract(&layout, &config).unwrap();
        let file = config.out_dir.join("features/place_01.jsonl");
        let full = std::fs::read_to_string(&file).unwrap();

        // simulate an interrupt: keep the header and half the records
        let kept: Vec<&str> = full.lines().take(1 + GROUP_SIZE / 2).collect();
        std::fs::write(&file, kept.join("\n") + "\n").unwrap();
        let outcome = run_extract(&layout, &config).unwrap();
        assert_eq!(outcome.recomputed, GROUP_SIZE - GROUP_SIZE / 2);
        let resumed = std::fs::read_to_string(&file).unwrap();
        assert_eq!(resumed, full, "resumed run diverged");
    }

    #[test]
    fn missing_ratings_is_a_stage_labeled_error() {
        let (dir, layout) = demo(2, 7);
        std::fs::remove_file(layout.ratings_path()).unwrap();
        let mut config = RunConfig::new(dir.path().join("out"));
        config.allow_partial = true;
        let err = run_pipeline(&layout, &config).unwrap_err();
        assert_eq!(err.stage, "ambiance-model");
        assert!(err.message.contains("ratings not found"), "{err}");
        assert!(config.out_dir.join("FAILED").exists());
    }
}
