//! Versioned feature manifest: every tunable the extractors depend on lives
//! here, so two feature vectors are comparable exactly when their manifest
//! versions match. The pipeline refuses to mix versions.

use serde::Serialize;

/// Bump whenever any constant below or the registry layout changes.
pub const MANIFEST_VERSION: &str = "1";

/// Sharpness constant `c` in the s/(s+c) normalization shared by camera
/// shake and landmark sharpness. `s` is mean squared Laplacian response of
/// [0,1] luminance.
pub const SHARPNESS_C: f64 = 0.01;

/// Sobel magnitude (on [0,1] luminance) above which a pixel counts as an
/// edge for the complexity metric.
pub const EDGE_THRESHOLD: f64 = 0.5;

/// RGB Euclidean distance (intensity units) under which 4-neighbors merge
/// during flood-fill segmentation.
pub const SEGMENT_TAU: f64 = 24.0;

/// Fraction of a circle's circumference that must vote for an accumulator
/// cell before it counts as a circle.
pub const HOUGH_VOTE_FRACTION: f64 = 0.30;

/// Sobel magnitude above which a pixel votes in the circle transform.
pub const HOUGH_EDGE_THRESHOLD: f64 = 0.35;

/// Minimum circle radius scanned, in pixels.
pub const HOUGH_MIN_RADIUS: u32 = 4;

/// Non-maximum suppression windows for circle peaks.
pub const HOUGH_NMS_CENTER: f64 = 5.0;
pub const HOUGH_NMS_RADIUS: f64 = 3.0;

/// Fraction of angular sectors around a candidate center that must hold
/// radially-aligned edge support; rejects arc-shaped accumulator echoes.
pub const HOUGH_MIN_COVERAGE: f64 = 0.75;
pub const HOUGH_COVERAGE_BINS: usize = 16;

/// |cosine| between an edge gradient and the candidate radial direction for
/// the edge pixel to count as support.
pub const HOUGH_ALIGNMENT: f64 = 0.92;

/// Epsilon floor in order/(complexity + eps).
pub const BIRKHOFF_EPSILON: f64 = 1e-3;

/// HSV thresholds for the 11-name color table.
pub const COLOR_BLACK_VALUE: f64 = 0.15;
pub const COLOR_WHITE_VALUE: f64 = 0.85;
pub const COLOR_GRAY_SATURATION: f64 = 0.12;
pub const COLOR_BROWN_VALUE: f64 = 0.5;

/// Longest image side used for analysis; larger images are box-averaged
/// down by an integer factor first.
pub const ANALYSIS_MAX_DIM: u32 = 512;

/// Side of the square window around a landmark point.
pub const LANDMARK_WINDOW: u32 = 15;

/// |tilt| in degrees above which a face counts as tilted.
pub const TILT_DEGREES: f64 = 10.0;

/// bbox area / image area at or above which a face counts as a close-up.
pub const CLOSE_UP_AREA: f64 = 0.25;

/// Epsilon in the face-focus ratio denominator.
pub const FOCUS_EPSILON: f64 = 1e-9;

/// Eigenfaces crop side and maximum basis size.
pub const EIGENFACE_SIDE: usize = 32;
pub const EIGENFACE_MAX_K: usize = 40;

/// Hue histogram bins for the hue-entropy feature.
pub const HUE_ENTROPY_BINS: usize = 36;

/// Luminance histogram bins for the order metric.
pub const ORDER_BINS: usize = 64;

/// Named constant table, rendered into the manifest file.
pub fn constants() -> Vec<(&'static str, f64)> {
    vec![
        ("sharpness_c", SHARPNESS_C),
        ("edge_threshold", EDGE_THRESHOLD),
        ("segment_tau", SEGMENT_TAU),
        ("hough_vote_fraction", HOUGH_VOTE_FRACTION),
        ("hough_edge_threshold", HOUGH_EDGE_THRESHOLD),
        ("hough_min_radius", HOUGH_MIN_RADIUS as f64),
        ("hough_nms_center", HOUGH_NMS_CENTER),
        ("hough_nms_radius", HOUGH_NMS_RADIUS),
        ("hough_min_coverage", HOUGH_MIN_COVERAGE),
        ("hough_coverage_bins", HOUGH_COVERAGE_BINS as f64),
        ("hough_alignment", HOUGH_ALIGNMENT),
        ("birkhoff_epsilon", BIRKHOFF_EPSILON),
        ("color_black_value", COLOR_BLACK_VALUE),
        ("color_white_value", COLOR_WHITE_VALUE),
        ("color_gray_saturation", COLOR_GRAY_SATURATION),
        ("color_brown_value", COLOR_BROWN_VALUE),
        ("analysis_max_dim", ANALYSIS_MAX_DIM as f64),
        ("landmark_window", LANDMARK_WINDOW as f64),
        ("tilt_degrees", TILT_DEGREES),
        ("close_up_area", CLOSE_UP_AREA),
        ("focus_epsilon", FOCUS_EPSILON),
        ("eigenface_side", EIGENFACE_SIDE as f64),
        ("eigenface_max_k", EIGENFACE_MAX_K as f64),
        ("hue_entropy_bins", HUE_ENTROPY_BINS as f64),
        ("order_bins", ORDER_BINS as f64),
    ]
}

#[derive(Debug, Error)]
#[error("manifest version mismatch: ours is {ours}, artifact has {theirs}")]
pub struct ManifestMismatch {
    pub ours: String,
    pub theirs: String,
}

use thiserror::Error;

/// Fail unless `theirs` matches the compiled-in manifest version.
pub fn check_version(theirs: &str) -> Result<(), ManifestMismatch> {
    if theirs == MANIFEST_VERSION {
        Ok(())
    } else {
        Err(ManifestMismatch {
            ours: MANIFEST_VERSION.to_string(),
            theirs: theirs.to_string(),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestFile {
    pub version: String,
    pub constants: Vec<(String, f64)>,
    pub features: Vec<crate::registry::FeatureDescriptor>,
}

/// Render the full manifest (version, constants, feature registry) for a
/// run's output directory.
pub fn render() -> String {
    let file = ManifestFile {
        version: MANIFEST_VERSION.to_string(),
        constants: constants()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        features: crate::registry::FeatureRegistry::standard().descriptors().to_vec(),
    };
    serde_json::to_string_pretty(&file).expect("manifest serializes")
}
