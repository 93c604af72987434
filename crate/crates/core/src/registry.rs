//! The canonical 64-feature registry and the per-picture feature record.
//!
//! The registry order is the contract: place vectors, CSV columns, and the
//! correlation-matrix rows all derive from it. Means of the 64 features,
//! then standard deviations of the 64, then the face count give the
//! 129-element place vector.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::MANIFEST_VERSION;

pub const FEATURE_COUNT: usize = 64;
pub const PLACE_VECTOR_LEN: usize = 2 * FEATURE_COUNT + 1;

/// Paper-style feature grouping, used to organize report rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFamily {
    Aesthetics,
    Colors,
    Emotions,
    Demographics,
    SelfPresentation,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeatureDescriptor {
    pub name: &'static str,
    pub family: FeatureFamily,
    /// Extractor module that produces it.
    pub origin: &'static str,
    /// Missing whenever the picture shows no face.
    pub face_dependent: bool,
    /// Declared inclusive range; `None` bound means unbounded.
    pub min: Option<f64>,
    pub max: Option<f64>,
}

use FeatureFamily::*;

const fn d(
    name: &'static str,
    family: FeatureFamily,
    origin: &'static str,
    face_dependent: bool,
    min: Option<f64>,
    max: Option<f64>,
) -> FeatureDescriptor {
    FeatureDescriptor {
        name,
        family,
        origin,
        face_dependent,
        min,
        max,
    }
}

const Z1: (Option<f64>, Option<f64>) = (Some(0.0), Some(1.0));

#[rustfmt::skip]
const DESCRIPTORS: [FeatureDescriptor; FEATURE_COUNT] = [
    d("camera_shake",       Aesthetics, "visual", false, Z1.0, Z1.1),
    d("contrast",           Aesthetics, "visual", false, Z1.0, Z1.1),
    d("image_order",        Aesthetics, "visual", false, Z1.0, Z1.1),
    d("image_complexity",   Aesthetics, "visual", false, Z1.0, Z1.1),
    d("birkhoff_ratio",     Aesthetics, "visual", false, Some(0.0), None),
    d("level_of_detail",    Aesthetics, "visual", false, Z1.0, Z1.1),
    d("symmetry",           Aesthetics, "visual", false, Z1.0, Z1.1),
    d("circle_count",       Aesthetics, "visual", false, Some(0.0), None),
    d("color_black",        Colors,     "visual", false, Z1.0, Z1.1),
    d("color_blue",         Colors,     "visual", false, Z1.0, Z1.1),
    d("color_brown",        Colors,     "visual", false, Z1.0, Z1.1),
    d("color_green",        Colors,     "visual", false, Z1.0, Z1.1),
    d("color_gray",         Colors,     "visual", false, Z1.0, Z1.1),
    d("color_orange",       Colors,     "visual", false, Z1.0, Z1.1),
    d("color_pink",         Colors,     "visual", false, Z1.0, Z1.1),
    d("color_purple",       Colors,     "visual", false, Z1.0, Z1.1),
    d("color_red",          Colors,     "visual", false, Z1.0, Z1.1),
    d("color_white",        Colors,     "visual", false, Z1.0, Z1.1),
    d("color_yellow",       Colors,     "visual", false, Z1.0, Z1.1),
    d("sharpness_eyes",     Aesthetics, "face",   true,  Z1.0, Z1.1),
    d("sharpness_nose",     Aesthetics, "face",   true,  Z1.0, Z1.1),
    d("sharpness_mouth",    Aesthetics, "face",   true,  Z1.0, Z1.1),
    d("face_focus",         Aesthetics, "face",   true,  Some(0.0), None),
    d("brightness_eyes",    Aesthetics, "face",   true,  Z1.0, Z1.1),
    d("brightness_nose",    Aesthetics, "face",   true,  Z1.0, Z1.1),
    d("brightness_mouth",   Aesthetics, "face",   true,  Z1.0, Z1.1),
    d("brightness_face",    Aesthetics, "face",   true,  Z1.0, Z1.1),
    d("lighting_eyes",      Aesthetics, "face",   true,  Z1.0, Z1.1),
    d("lighting_nose",      Aesthetics, "face",   true,  Z1.0, Z1.1),
    d("lighting_mouth",     Aesthetics, "face",   true,  Z1.0, Z1.1),
    d("lighting_face",      Aesthetics, "face",   true,  Z1.0, Z1.1),
    d("saturation_eyes",    Aesthetics, "face",   true,  Z1.0, Z1.1),
    d("saturation_nose",    Aesthetics, "face",   true,  Z1.0, Z1.1),
    d("saturation_mouth",   Aesthetics, "face",   true,  Z1.0, Z1.1),
    d("saturation_face",    Aesthetics, "face",   true,  Z1.0, Z1.1),
    d("hue_eyes",           Colors,     "face",   true,  Some(0.0), Some(360.0)),
    d("hue_nose",           Colors,     "face",   true,  Some(0.0), Some(360.0)),
    d("hue_mouth",          Colors,     "face",   true,  Some(0.0), Some(360.0)),
    d("hue_face",           Colors,     "face",   true,  Some(0.0), Some(360.0)),
    d("emotion_anger",      Emotions,   "face",   true,  Z1.0, Z1.1),
    d("emotion_disgust",    Emotions,   "face",   true,  Z1.0, Z1.1),
    d("emotion_happy",      Emotions,   "face",   true,  Z1.0, Z1.1),
    d("emotion_neutral",    Emotions,   "face",   true,  Z1.0, Z1.1),
    d("emotion_sad",        Emotions,   "face",   true,  Z1.0, Z1.1),
    d("smile",              Emotions,   "face",   true,  Z1.0, Z1.1),
    d("age",                Demographics, "face", true,  Some(0.0), None),
    d("sex_female",         Demographics, "face", true,  Z1.0, Z1.1),
    d("race_caucasian",     Demographics, "face", true,  Z1.0, Z1.1),
    d("race_black",         Demographics, "face", true,  Z1.0, Z1.1),
    d("race_asian",         Demographics, "face", true,  Z1.0, Z1.1),
    d("glasses_reading",    SelfPresentation, "face", true, Z1.0, Z1.1),
    d("glasses_sun",        SelfPresentation, "face", true, Z1.0, Z1.1),
    d("shows_face",         SelfPresentation, "face", false, Z1.0, Z1.1),
    d("face_centrality",    SelfPresentation, "face", true,  Z1.0, Z1.1),
    d("tilted",             SelfPresentation, "face", true,  Z1.0, Z1.1),
    d("close_up",           SelfPresentation, "face", true,  Z1.0, Z1.1),
    d("uniqueness",         SelfPresentation, "face", false, Some(0.0), None),
    d("contrast_red",       Aesthetics, "visual", false, Z1.0, Z1.1),
    d("contrast_green",     Aesthetics, "visual", false, Z1.0, Z1.1),
    d("contrast_blue",      Aesthetics, "visual", false, Z1.0, Z1.1),
    d("bbox_area_fraction", SelfPresentation, "face", true, Z1.0, Z1.1),
    d("edge_density",       Aesthetics, "visual", false, Some(0.0), None),
    d("hue_entropy",        Colors,     "visual", false, Z1.0, Z1.1),
    d("saturation_std",     Aesthetics, "visual", false, Z1.0, Z1.1),
];

/// Ordered view over the 64 descriptors plus name lookup.
#[derive(Debug, Clone)]
pub struct FeatureRegistry {
    descriptors: &'static [FeatureDescriptor; FEATURE_COUNT],
}

impl FeatureRegistry {
    pub fn standard() -> Self {
        Self {
            descriptors: &DESCRIPTORS,
        }
    }

    pub fn len(&self) -> usize {
        FEATURE_COUNT
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn descriptors(&self) -> &[FeatureDescriptor] {
        self.descriptors
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.descriptors.iter().position(|f| f.name == name)
    }

    pub fn name(&self, index: usize) -> &'static str {
        self.descriptors[index].name
    }

    /// Labels for the flattened 129-element place vector, in order.
    pub fn place_vector_labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(PLACE_VECTOR_LEN);
        for f in self.descriptors {
            labels.push(format!("mean {}", f.name));
        }
        for f in self.descriptors {
            labels.push(format!("std {}", f.name));
        }
        labels.push("face_count".to_string());
        labels
    }
}

/// A feature slot is present, missing (no face detected), or not applicable
/// (face present but the measurement is undefined, e.g. a degenerate box).
/// Zero is a legitimate value, so absence is never encoded as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureValue {
    Present(f64),
    Missing,
    NotApplicable,
}

impl FeatureValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            FeatureValue::Present(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_present(&self) -> bool {
        matches!(self, FeatureValue::Present(_))
    }

    pub fn from_option(v: Option<f64>) -> Self {
        match v {
            Some(v) => FeatureValue::Present(v),
            None => FeatureValue::Missing,
        }
    }
}

impl Serialize for FeatureValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            FeatureValue::Present(v) => s.serialize_f64(*v),
            FeatureValue::Missing => s.serialize_none(),
            FeatureValue::NotApplicable => s.serialize_str("na"),
        }
    }
}

impl<'de> Deserialize<'de> for FeatureValue {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
            Null(()),
        }
        match Raw::deserialize(de)? {
            Raw::Num(v) => Ok(FeatureValue::Present(v)),
            Raw::Text(t) if t == "na" => Ok(FeatureValue::NotApplicable),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "unexpected feature value {t:?}"
            ))),
            Raw::Null(()) => Ok(FeatureValue::Missing),
        }
    }
}

/// The 64 named feature values for one picture.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PictureFeatures {
    pub picture_id: String,
    pub manifest_version: String,
    pub content_hash: String,
    pub values: Vec<FeatureValue>,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("manifest version mismatch: registry {registry}, record {record}")]
    ManifestMismatch { registry: String, record: String },
    #[error("feature vector has {got} slots, registry requires {want}")]
    WrongLength { got: usize, want: usize },
    #[error("face-dependent slot {name} is {state} while shows_face = {shows_face}")]
    FaceDependencyViolated {
        name: &'static str,
        state: &'static str,
        shows_face: f64,
    },
}

impl PictureFeatures {
    pub fn new(picture_id: String, content_hash: String, values: Vec<FeatureValue>) -> Self {
        Self {
            picture_id,
            manifest_version: MANIFEST_VERSION.to_string(),
            content_hash,
            values,
        }
    }

    pub fn shows_face(&self) -> bool {
        let idx = FeatureRegistry::standard()
            .index_of("shows_face")
            .expect("registry has shows_face");
        matches!(self.values[idx], FeatureValue::Present(v) if v > 0.5)
    }

    /// Check the record against the registry contract: length 64, matching
    /// manifest version, and face-dependent slots missing exactly when the
    /// picture shows no face.
    pub fn validate(&self, registry: &FeatureRegistry) -> Result<(), RegistryError> {
        if self.manifest_version != MANIFEST_VERSION {
            return Err(RegistryError::ManifestMismatch {
                registry: MANIFEST_VERSION.to_string(),
                record: self.manifest_version.clone(),
            });
        }
        if self.values.len() != registry.len() {
            return Err(RegistryError::WrongLength {
                got: self.values.len(),
                want: registry.len(),
            });
        }
        let shows_face = if self.shows_face() { 1.0 } else { 0.0 };
        for (desc, value) in registry.descriptors().iter().zip(&self.values) {
            if desc.face_dependent {
                match (shows_face > 0.5, value) {
                    (false, FeatureValue::Present(_)) => {
                        return Err(RegistryError::FaceDependencyViolated {
                            name: desc.name,
                            state: "present",
                            shows_face,
                        });
                    }
                    (true, FeatureValue::Missing) => {
                        return Err(RegistryError::FaceDependencyViolated {
                            name: desc.name,
                            state: "missing",
                            shows_face,
                        });
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_has_64_unique_names() {
        let reg = FeatureRegistry::standard();
        assert_eq!(reg.len(), 64);
        let mut names: Vec<_> = reg.descriptors().iter().map(|f| f.name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 64, "duplicate feature names");
    }

    #[test]
    fn face_dependent_split_is_37_27() {
        let reg = FeatureRegistry::standard();
        let dependent = reg.descriptors().iter().filter(|f| f.face_dependent).count();
        assert_eq!(dependent, 37);
        assert_eq!(reg.len() - dependent, 27);
    }

    #[test]
    fn place_vector_labels_are_129() {
        let labels = FeatureRegistry::standard().place_vector_labels();
        assert_eq!(labels.len(), PLACE_VECTOR_LEN);
        assert_eq!(labels[0], "mean camera_shake");
        assert_eq!(labels[64], "std camera_shake");
        assert_eq!(labels[128], "face_count");
    }

    #[test]
    fn feature_value_serde_round_trip() {
        let values = vec![
            FeatureValue::Present(0.25),
            FeatureValue::Missing,
            FeatureValue::NotApplicable,
            FeatureValue::Present(0.0),
        ];
        let json = serde_json::to_string(&values).unwrap();
        assert_eq!(json, "[0.25,null,\"na\",0.0]");
        let back: Vec<FeatureValue> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, values);
    }

    #[test]
    fn validate_rejects_wrong_manifest() {
        let reg = FeatureRegistry::standard();
        let mut rec = PictureFeatures::new(
            "p1".into(),
            "h".into(),
            vec![FeatureValue::Missing; FEATURE_COUNT],
        );
        rec.manifest_version = "v999".into();
        assert!(matches!(
            rec.validate(&reg),
            Err(RegistryError::ManifestMismatch { .. })
        ));
    }
}
