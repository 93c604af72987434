//! Assemble per-picture features into the 64-slot registry and aggregate a
//! place's pictures into its 129-element vector: per-feature mean and
//! sample standard deviation over present values, plus the face count.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::FaceAnnotation;
use crate::features::eigenfaces::EigenfacesModel;
use crate::features::face::{extract_face, uniqueness, CorpusStats, FaceFeatureError, FaceFeatures};
use crate::features::visual::{extract_visual, VisualFeatures};
use crate::imaging::{ImageBuffer, ImagingError};
use crate::manifest::MANIFEST_VERSION;
use crate::registry::{FeatureRegistry, FeatureValue, PictureFeatures, FEATURE_COUNT, PLACE_VECTOR_LEN};

/// The paper's protocol fixes 25 pictures per place.
pub const GROUP_SIZE: usize = 25;
pub const MIN_PARTIAL_GROUP: usize = 5;

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("place {place_id:?} has {got} pictures; expected exactly {GROUP_SIZE} (or >= {MIN_PARTIAL_GROUP} with allow-partial)")]
    WrongGroupSize { place_id: String, got: usize },
    #[error("manifest version mismatch within group: {0} vs {1}")]
    ManifestMismatch(String, String),
    #[error(transparent)]
    Registry(#[from] crate::registry::RegistryError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Face(#[from] FaceFeatureError),
    #[error("malformed profile data: {0}")]
    MalformedProfile(String),
}

/// The face-independent sub-vector used for corpus statistics and
/// uniqueness, in registry order of the visual-origin features.
pub fn visual_vector(v: &VisualFeatures) -> Vec<f64> {
    let mut out = vec![
        v.camera_shake,
        v.contrast,
        v.image_order,
        v.image_complexity,
        v.birkhoff_ratio,
        v.level_of_detail_normalized,
        v.symmetry,
        v.circle_count as f64,
    ];
    out.extend_from_slice(&v.color_name_hist);
    out.extend_from_slice(&v.contrast_rgb);
    out.push(v.edge_density);
    out.push(v.hue_entropy);
    out.push(v.saturation_std);
    out
}

fn set(values: &mut [FeatureValue], registry: &FeatureRegistry, name: &str, value: FeatureValue) {
    let idx = registry.index_of(name).unwrap_or_else(|| panic!("unknown feature {name}"));
    values[idx] = value;
}

/// Fill all 64 registry slots from the extractor outputs.
pub fn assemble_features(
    picture_id: &str,
    content_hash: &str,
    visual: &VisualFeatures,
    face: &FaceFeatures,
    uniqueness_value: Option<f64>,
) -> PictureFeatures {
    let registry = FeatureRegistry::standard();
    let mut values = vec![FeatureValue::Missing; FEATURE_COUNT];
    let p = FeatureValue::Present;

    set(&mut values, &registry, "camera_shake", p(visual.camera_shake));
    set(&mut values, &registry, "contrast", p(visual.contrast));
    set(&mut values, &registry, "image_order", p(visual.image_order));
    set(&mut values, &registry, "image_complexity", p(visual.image_complexity));
    set(&mut values, &registry, "birkhoff_ratio", p(visual.birkhoff_ratio));
    set(&mut values, &registry, "level_of_detail", p(visual.level_of_detail_normalized));
    set(&mut values, &registry, "symmetry", p(visual.symmetry));
    set(&mut values, &registry, "circle_count", p(visual.circle_count as f64));
    for (name, value) in crate::features::visual::COLOR_NAMES
        .iter()
        .zip(visual.color_name_hist)
    {
        set(&mut values, &registry, &format!("color_{name}"), p(value));
    }
    set(&mut values, &registry, "contrast_red", p(visual.contrast_rgb[0]));
    set(&mut values, &registry, "contrast_green", p(visual.contrast_rgb[1]));
    set(&mut values, &registry, "contrast_blue", p(visual.contrast_rgb[2]));
    set(&mut values, &registry, "edge_density", p(visual.edge_density));
    set(&mut values, &registry, "hue_entropy", p(visual.hue_entropy));
    set(&mut values, &registry, "saturation_std", p(visual.saturation_std));

    set(
        &mut values,
        &registry,
        "shows_face",
        p(if face.shows_face { 1.0 } else { 0.0 }),
    );
    set(&mut values, &registry, "uniqueness", FeatureValue::from_option(uniqueness_value));

    if face.shows_face {
        // a detected face may still leave individual attributes undefined;
        // those become not-applicable rather than missing
        let opt = |v: Option<f64>| match v {
            Some(v) => FeatureValue::Present(v),
            None => FeatureValue::NotApplicable,
        };
        let region_names = ["eyes", "nose", "mouth", "face"];
        if let Some(sharp) = face.sharpness {
            for (name, v) in ["eyes", "nose", "mouth"].iter().zip(sharp) {
                set(&mut values, &registry, &format!("sharpness_{name}"), p(v));
            }
        }
        set(&mut values, &registry, "face_focus", opt(face.face_focus.flatten()));
        for (field, prefix) in [
            (&face.brightness, "brightness"),
            (&face.lighting, "lighting"),
            (&face.saturation, "saturation"),
            (&face.hue, "hue"),
        ] {
            if let Some(vals) = field {
                for (name, v) in region_names.iter().zip(vals.iter()) {
                    set(&mut values, &registry, &format!("{prefix}_{name}"), p(*v));
                }
            }
        }
        if let Some(probs) = face.emotion_probs {
            for (name, v) in crate::features::eigenfaces::EMOTIONS.iter().zip(probs) {
                set(&mut values, &registry, &format!("emotion_{name}"), p(v));
            }
        }
        set(&mut values, &registry, "smile", opt(face.smile));
        set(&mut values, &registry, "age", opt(face.age));
        set(&mut values, &registry, "sex_female", opt(face.sex_female));
        if let Some(race) = face.race {
            set(&mut values, &registry, "race_caucasian", p(race[0]));
            set(&mut values, &registry, "race_black", p(race[1]));
            set(&mut values, &registry, "race_asian", p(race[2]));
        } else {
            for name in ["race_caucasian", "race_black", "race_asian"] {
                set(&mut values, &registry, name, FeatureValue::NotApplicable);
            }
        }
        set(&mut values, &registry, "glasses_reading", opt(face.glasses_reading));
        set(&mut values, &registry, "glasses_sun", opt(face.glasses_sun));
        set(&mut values, &registry, "face_centrality", opt(face.face_centrality));
        set(&mut values, &registry, "tilted", opt(face.tilted));
        set(&mut values, &registry, "close_up", opt(face.close_up));
        set(&mut values, &registry, "bbox_area_fraction", opt(face.bbox_area_fraction));
    }

    PictureFeatures::new(picture_id.to_string(), content_hash.to_string(), values)
}

/// Full per-picture extraction: visual metrics, face metrics, uniqueness
/// against the corpus, assembled into the registry layout.
pub fn extract_picture(
    picture_id: &str,
    content_hash: &str,
    image: &ImageBuffer,
    annotation: &FaceAnnotation,
    corpus_stats: &CorpusStats,
    model: &EigenfacesModel,
) -> Result<PictureFeatures, AggregateError> {
    let visual = extract_visual(image)?;
    let face = extract_face(image, annotation, model)?;
    let unique = uniqueness(&visual_vector(&visual), corpus_stats)?;
    let record = assemble_features(picture_id, content_hash, &visual, &face, Some(unique));
    record.validate(&FeatureRegistry::standard())?;
    Ok(record)
}

/// The aggregated place record: 64 means, 64 sample standard deviations,
/// and the number of pictures showing a face.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlaceProfile {
    pub place_id: String,
    pub manifest_version: String,
    pub mean: Vec<FeatureValue>,
    pub std: Vec<FeatureValue>,
    pub face_count: u32,
}

/// Mean and sample standard deviation over the present values of each
/// feature slot; a feature with no present samples keeps a missing mean,
/// one with fewer than two keeps a missing standard deviation.
pub fn aggregate_place(
    place_id: &str,
    pictures: &[PictureFeatures],
    allow_partial: bool,
) -> Result<PlaceProfile, AggregateError> {
    let acceptable = pictures.len() == GROUP_SIZE
        || (allow_partial && pictures.len() >= MIN_PARTIAL_GROUP);
    if !acceptable {
        return Err(AggregateError::WrongGroupSize {
            place_id: place_id.to_string(),
            got: pictures.len(),
        });
    }
    let registry = FeatureRegistry::standard();
    for picture in pictures {
        if picture.manifest_version != MANIFEST_VERSION {
            return Err(AggregateError::ManifestMismatch(
                MANIFEST_VERSION.to_string(),
                picture.manifest_version.clone(),
            ));
        }
        picture.validate(&registry)?;
    }

    let mut mean = Vec::with_capacity(FEATURE_COUNT);
    let mut std = Vec::with_capacity(FEATURE_COUNT);
    for slot in 0..FEATURE_COUNT {
        let present: Vec<f64> = pictures
            .iter()
            .filter_map(|p| p.values[slot].value())
            .collect();
        if present.is_empty() {
            mean.push(FeatureValue::Missing);
            std.push(FeatureValue::Missing);
            continue;
        }
        let m = present.iter().sum::<f64>() / present.len() as f64;
        mean.push(FeatureValue::Present(m));
        if present.len() < 2 {
            std.push(FeatureValue::Missing);
        } else {
            let var = present.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
                / (present.len() - 1) as f64;
            std.push(FeatureValue::Present(var.sqrt()));
        }
    }
    let face_count = pictures.iter().filter(|p| p.shows_face()).count() as u32;
    Ok(PlaceProfile {
        place_id: place_id.to_string(),
        manifest_version: MANIFEST_VERSION.to_string(),
        mean,
        std,
        face_count,
    })
}

impl PlaceProfile {
    /// The 129-element vector: 64 means, 64 stds, face count.
    pub fn flatten(&self) -> Vec<FeatureValue> {
        let mut out = Vec::with_capacity(PLACE_VECTOR_LEN);
        out.extend(self.mean.iter().copied());
        out.extend(self.std.iter().copied());
        out.push(FeatureValue::Present(self.face_count as f64));
        out
    }

    pub fn unflatten(
        place_id: &str,
        values: &[FeatureValue],
    ) -> Result<PlaceProfile, AggregateError> {
        if values.len() != PLACE_VECTOR_LEN {
            return Err(AggregateError::MalformedProfile(format!(
                "expected {PLACE_VECTOR_LEN} values, got {}",
                values.len()
            )));
        }
        let face_count = values[PLACE_VECTOR_LEN - 1]
            .value()
            .ok_or_else(|| AggregateError::MalformedProfile("missing face_count".into()))?;
        Ok(PlaceProfile {
            place_id: place_id.to_string(),
            manifest_version: MANIFEST_VERSION.to_string(),
            mean: values[..FEATURE_COUNT].to_vec(),
            std: values[FEATURE_COUNT..2 * FEATURE_COUNT].to_vec(),
            face_count: face_count as u32,
        })
    }
}

fn format_value(v: &FeatureValue) -> String {
    match v {
        FeatureValue::Present(x) => format!("{x}"),
        _ => String::new(),
    }
}

/// CSV: one row per place, 129 value columns after the id; empty cell means
/// missing. `comment` lines (seed, manifest) go first, prefixed with `#`.
pub fn profiles_to_csv(profiles: &[PlaceProfile], comment: &str) -> String {
    let registry = FeatureRegistry::standard();
    let mut out = String::new();
    for line in comment.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("place_id");
    for label in registry.place_vector_labels() {
        out.push(',');
        out.push_str(&label);
    }
    out.push('\n');
    for profile in profiles {
        out.push_str(&profile.place_id);
        for value in profile.flatten() {
            out.push(',');
            out.push_str(&format_value(&value));
        }
        out.push('\n');
    }
    out
}

pub fn profiles_from_csv(text: &str) -> Result<Vec<PlaceProfile>, AggregateError> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| AggregateError::MalformedProfile("empty profile CSV".into()))?;
    let expected_cols = PLACE_VECTOR_LEN + 1;
    if header.split(',').count() != expected_cols {
        return Err(AggregateError::MalformedProfile(format!(
            "header has {} columns, expected {expected_cols}",
            header.split(',').count()
        )));
    }
    let mut profiles = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let place_id = fields
            .next()
            .ok_or_else(|| AggregateError::MalformedProfile("missing place id".into()))?;
        let values: Result<Vec<FeatureValue>, _> = fields
            .map(|f| {
                if f.is_empty() {
                    Ok(FeatureValue::Missing)
                } else {
                    f.parse::<f64>()
                        .map(FeatureValue::Present)
                        .map_err(|e| AggregateError::MalformedProfile(format!("{place_id}: {e}")))
                }
            })
            .collect();
        profiles.push(PlaceProfile::unflatten(place_id, &values?)?);
    }
    Ok(profiles)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProfileFile {
    pub manifest_version: String,
    pub seed: u64,
    pub profiles: Vec<PlaceProfile>,
}
