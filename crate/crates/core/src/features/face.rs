//! Face-dependent extractors: landmark sharpness and focus, per-region
//! brightness/lighting/saturation, landmark hues, eigenfaces emotion
//! probabilities, demographics passthrough, and self-presentation geometry.
//!
//! Every extractor here needs a detected face; pictures without one carry
//! explicit missing values downstream.

use thiserror::Error;

use crate::annotation::{FaceAnnotation, Glasses, Sex};
use crate::features::eigenfaces::{crop_face, EigenfacesError, EigenfacesModel};
use crate::features::visual::sharpness_score;
use crate::imaging::{luminance, to_hsv, ImageBuffer, Region};
use crate::manifest::{CLOSE_UP_AREA, FOCUS_EPSILON, LANDMARK_WINDOW, TILT_DEGREES};

#[derive(Debug, Error)]
pub enum FaceFeatureError {
    #[error("no face detected")]
    NoFace,
    #[error("degenerate corpus: every feature has zero variance")]
    DegenerateCorpus,
    #[error("corpus statistics need at least 2 pictures, got {0}")]
    CorpusTooSmall(usize),
    #[error(transparent)]
    Eigenfaces(#[from] EigenfacesError),
}

fn require_face(annotation: &FaceAnnotation) -> Result<Region, FaceFeatureError> {
    match (annotation.detected, annotation.bbox) {
        (true, Some(bbox)) => Ok(bbox),
        _ => Err(FaceFeatureError::NoFace),
    }
}

fn landmark_windows(
    image: &ImageBuffer,
    annotation: &FaceAnnotation,
) -> Result<[Region; 4], FaceFeatureError> {
    require_face(annotation)?;
    let marks = annotation.landmarks.ok_or(FaceFeatureError::NoFace)?;
    let w = |p: crate::annotation::Point| {
        Region::window(p.x, p.y, LANDMARK_WINDOW, image.width(), image.height())
    };
    Ok([
        w(marks.left_eye),
        w(marks.right_eye),
        w(marks.nose),
        w(marks.mouth),
    ])
}

fn mean_over_region(image: &ImageBuffer, region: Region, f: impl Fn([u8; 3]) -> f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0u64;
    for y in region.y0..region.y1 {
        for x in region.x0..region.x1 {
            sum += f(image.pixel(x, y));
            count += 1;
        }
    }
    sum / count as f64
}

/// The face oval: the ellipse inscribed in the bbox.
fn for_each_oval_pixel(image: &ImageBuffer, bbox: Region, mut f: impl FnMut([u8; 3])) {
    let (cx, cy) = bbox.center();
    let rx = bbox.width() as f64 / 2.0;
    let ry = bbox.height() as f64 / 2.0;
    for y in bbox.y0..bbox.y1.min(image.height()) {
        for x in bbox.x0..bbox.x1.min(image.width()) {
            let dx = (x as f64 + 0.5 - cx) / rx;
            let dy = (y as f64 + 0.5 - cy) / ry;
            if dx * dx + dy * dy <= 1.0 {
                f(image.pixel(x, y));
            }
        }
    }
}

fn mean_over_oval(image: &ImageBuffer, bbox: Region, f: impl Fn([u8; 3]) -> f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0u64;
    for_each_oval_pixel(image, bbox, |p| {
        sum += f(p);
        count += 1;
    });
    if count == 0 {
        return f(image.pixel(bbox.x0.min(image.width() - 1), bbox.y0.min(image.height() - 1)));
    }
    sum / count as f64
}

/// Mean squared 4-neighbor Laplacian of luminance over a window, sampled
/// with image-context borders.
fn window_laplacian_energy(image: &ImageBuffer, region: Region) -> f64 {
    let at = |x: i64, y: i64| -> f64 {
        let x = x.clamp(0, image.width() as i64 - 1) as u32;
        let y = y.clamp(0, image.height() as i64 - 1) as u32;
        luminance(image.pixel(x, y))
    };
    let mut sum = 0.0;
    let mut count = 0u64;
    for y in region.y0 as i64..region.y1 as i64 {
        for x in region.x0 as i64..region.x1 as i64 {
            let l = at(x - 1, y) + at(x + 1, y) + at(x, y - 1) + at(x, y + 1) - 4.0 * at(x, y);
            sum += l * l;
            count += 1;
        }
    }
    sum / count as f64
}

/// Local sharpness around {eyes, nose, mouth}, each through the shared
/// s/(s+c) map (sharp = high). The eye value averages both eye windows.
pub fn landmark_sharpness(
    image: &ImageBuffer,
    annotation: &FaceAnnotation,
) -> Result<[f64; 3], FaceFeatureError> {
    let [left_eye, right_eye, nose, mouth] = landmark_windows(image, annotation)?;
    let eyes = 0.5
        * (window_laplacian_energy(image, left_eye) + window_laplacian_energy(image, right_eye));
    Ok([
        sharpness_score(eyes),
        sharpness_score(window_laplacian_energy(image, nose)),
        sharpness_score(window_laplacian_energy(image, mouth)),
    ])
}

/// Mean gradient energy inside the bbox over mean gradient energy outside.
/// Returns `None` when the bbox covers the whole image (nothing outside to
/// compare against): the feature is not applicable rather than an error.
pub fn face_focus(
    image: &ImageBuffer,
    annotation: &FaceAnnotation,
) -> Result<Option<f64>, FaceFeatureError> {
    let bbox = require_face(annotation)?.clamped(image.width(), image.height());
    let total = image.width() as u64 * image.height() as u64;
    if bbox.area() >= total {
        return Ok(None);
    }
    let lum = image.luminance_plane();
    let w = image.width() as usize;
    let h = image.height() as usize;
    let at = |x: isize, y: isize| -> f64 {
        lum[(y.clamp(0, h as isize - 1) as usize) * w + x.clamp(0, w as isize - 1) as usize]
    };
    let (mut inside, mut outside) = ((0.0, 0u64), (0.0, 0u64));
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let gx = at(xi + 1, yi) - at(xi - 1, yi);
            let gy = at(xi, yi + 1) - at(xi, yi - 1);
            let energy = gx * gx + gy * gy;
            if bbox.contains(x as f64, y as f64) {
                inside.0 += energy;
                inside.1 += 1;
            } else {
                outside.0 += energy;
                outside.1 += 1;
            }
        }
    }
    let inside_mean = inside.0 / inside.1.max(1) as f64;
    let outside_mean = outside.0 / outside.1.max(1) as f64;
    Ok(Some(inside_mean / (outside_mean + FOCUS_EPSILON)))
}

/// Mean luminance and mean HSV saturation over each landmark window and the
/// face oval, ordered {eyes, nose, mouth, face}.
pub fn region_brightness_saturation(
    image: &ImageBuffer,
    annotation: &FaceAnnotation,
) -> Result<([f64; 4], [f64; 4]), FaceFeatureError> {
    let bbox = require_face(annotation)?.clamped(image.width(), image.height());
    let [left_eye, right_eye, nose, mouth] = landmark_windows(image, annotation)?;
    let bright = |r: Region| mean_over_region(image, r, luminance);
    let sat = |r: Region| mean_over_region(image, r, |p| to_hsv(p).saturation);
    let brightness = [
        0.5 * (bright(left_eye) + bright(right_eye)),
        bright(nose),
        bright(mouth),
        mean_over_oval(image, bbox, luminance),
    ];
    let saturation = [
        0.5 * (sat(left_eye) + sat(right_eye)),
        sat(nose),
        sat(mouth),
        mean_over_oval(image, bbox, |p| to_hsv(p).saturation),
    ];
    Ok((brightness, saturation))
}

fn hsl_lightness(p: [u8; 3]) -> f64 {
    let max = p.iter().max().copied().unwrap() as f64;
    let min = p.iter().min().copied().unwrap() as f64;
    (max + min) / (2.0 * 255.0)
}

/// Mean HSL lightness per region, the "lighting" companion to brightness.
pub fn region_lighting(
    image: &ImageBuffer,
    annotation: &FaceAnnotation,
) -> Result<[f64; 4], FaceFeatureError> {
    let bbox = require_face(annotation)?.clamped(image.width(), image.height());
    let [left_eye, right_eye, nose, mouth] = landmark_windows(image, annotation)?;
    let light = |r: Region| mean_over_region(image, r, hsl_lightness);
    Ok([
        0.5 * (light(left_eye) + light(right_eye)),
        light(nose),
        light(mouth),
        mean_over_oval(image, bbox, hsl_lightness),
    ])
}

/// Saturation-weighted circular mean of hue, with a low-confidence flag for
/// windows that are essentially achromatic (hue is then defined as 0).
pub fn circular_mean_hue(pixels: impl Iterator<Item = [u8; 3]>) -> (f64, bool) {
    let mut sin_sum = 0.0;
    let mut cos_sum = 0.0;
    let mut weight = 0.0;
    for p in pixels {
        let hsv = to_hsv(p);
        let rad = hsv.hue.to_radians();
        sin_sum += hsv.saturation * rad.sin();
        cos_sum += hsv.saturation * rad.cos();
        weight += hsv.saturation;
    }
    if weight < 1e-9 {
        return (0.0, true);
    }
    let hue = sin_sum.atan2(cos_sum).to_degrees().rem_euclid(360.0);
    (hue, false)
}

fn region_pixels<'a>(
    image: &'a ImageBuffer,
    region: Region,
) -> impl Iterator<Item = [u8; 3]> + 'a {
    (region.y0..region.y1)
        .flat_map(move |y| (region.x0..region.x1).map(move |x| image.pixel(x, y)))
}

/// Circular-mean hue per region, ordered {eyes, nose, mouth, face}, plus
/// the per-region low-confidence flags.
pub fn landmark_hues(
    image: &ImageBuffer,
    annotation: &FaceAnnotation,
) -> Result<([f64; 4], [bool; 4]), FaceFeatureError> {
    let bbox = require_face(annotation)?.clamped(image.width(), image.height());
    let [left_eye, right_eye, nose, mouth] = landmark_windows(image, annotation)?;
    let eye_pixels = region_pixels(image, left_eye).chain(region_pixels(image, right_eye));
    let (eyes, eyes_flag) = circular_mean_hue(eye_pixels);
    let (nose_hue, nose_flag) = circular_mean_hue(region_pixels(image, nose));
    let (mouth_hue, mouth_flag) = circular_mean_hue(region_pixels(image, mouth));
    let mut oval_pixels = Vec::new();
    for_each_oval_pixel(image, bbox, |p| oval_pixels.push(p));
    let (face_hue, face_flag) = circular_mean_hue(oval_pixels.into_iter());
    Ok((
        [eyes, nose_hue, mouth_hue, face_hue],
        [eyes_flag, nose_flag, mouth_flag, face_flag],
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfPresentation {
    pub shows_face: bool,
    pub face_centrality: Option<f64>,
    pub tilted: Option<bool>,
    pub close_up: Option<bool>,
    pub glasses_reading: Option<bool>,
    pub glasses_sun: Option<bool>,
    pub bbox_area_fraction: Option<f64>,
}

/// Geometry-of-the-pose flags; well-defined for undetected faces too, where
/// only `shows_face` carries a value.
pub fn self_presentation(image: &ImageBuffer, annotation: &FaceAnnotation) -> SelfPresentation {
    if !annotation.detected {
        return SelfPresentation {
            shows_face: false,
            face_centrality: None,
            tilted: None,
            close_up: None,
            glasses_reading: None,
            glasses_sun: None,
            bbox_area_fraction: None,
        };
    }
    let bbox = annotation
        .bbox
        .expect("validated annotation has bbox")
        .clamped(image.width(), image.height());
    let (cx, cy) = bbox.center();
    let icx = image.width() as f64 / 2.0;
    let icy = image.height() as f64 / 2.0;
    let half_diagonal = (icx * icx + icy * icy).sqrt();
    let dist = ((cx - icx).powi(2) + (cy - icy).powi(2)).sqrt();
    let area_fraction =
        bbox.area() as f64 / (image.width() as f64 * image.height() as f64);
    SelfPresentation {
        shows_face: true,
        face_centrality: Some((1.0 - dist / half_diagonal).clamp(0.0, 1.0)),
        tilted: Some(annotation.tilt_deg.unwrap_or(0.0).abs() > TILT_DEGREES),
        close_up: Some(area_fraction >= CLOSE_UP_AREA),
        glasses_reading: Some(annotation.glasses == Some(Glasses::Reading)),
        glasses_sun: Some(annotation.glasses == Some(Glasses::Sunglasses)),
        bbox_area_fraction: Some(area_fraction),
    }
}

/// Per-feature location and scale over a corpus of face-independent visual
/// vectors; zero-variance features are excluded from uniqueness.
#[derive(Debug, Clone)]
pub struct CorpusStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl CorpusStats {
    pub fn from_vectors(vectors: &[Vec<f64>]) -> Result<Self, FaceFeatureError> {
        if vectors.len() < 2 {
            return Err(FaceFeatureError::CorpusTooSmall(vectors.len()));
        }
        let dim = vectors[0].len();
        let n = vectors.len() as f64;
        let mut mean = vec![0.0; dim];
        for v in vectors {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut std = vec![0.0; dim];
        for v in vectors {
            for ((s, x), m) in std.iter_mut().zip(v).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        for s in std.iter_mut() {
            *s = (*s / (n - 1.0)).sqrt();
        }
        Ok(Self { mean, std })
    }
}

/// Root-mean-square z-score of the visual sub-vector against the corpus:
/// 0 at the corpus mean, 1 when every feature sits one standard deviation
/// out.
pub fn uniqueness(visual: &[f64], stats: &CorpusStats) -> Result<f64, FaceFeatureError> {
    let mut sum = 0.0;
    let mut included = 0usize;
    for ((x, m), s) in visual.iter().zip(&stats.mean).zip(&stats.std) {
        if *s > 0.0 {
            let z = (x - m) / s;
            sum += z * z;
            included += 1;
        }
    }
    if included == 0 {
        return Err(FaceFeatureError::DegenerateCorpus);
    }
    Ok((sum / included as f64).sqrt())
}

/// Everything the face module contributes for one picture. Fields are
/// `None` when no face was detected; provider-optional attributes may be
/// absent even for detected faces.
#[derive(Debug, Clone)]
pub struct FaceFeatures {
    pub shows_face: bool,
    pub sharpness: Option<[f64; 3]>,
    /// `Some(None)` means a detected face whose focus is undefined
    /// (bbox covers the whole image).
    pub face_focus: Option<Option<f64>>,
    pub brightness: Option<[f64; 4]>,
    pub lighting: Option<[f64; 4]>,
    pub saturation: Option<[f64; 4]>,
    pub hue: Option<[f64; 4]>,
    pub hue_low_confidence: [bool; 4],
    pub emotion_probs: Option<[f64; 5]>,
    pub smile: Option<f64>,
    pub age: Option<f64>,
    pub sex_female: Option<f64>,
    pub race: Option<[f64; 3]>,
    pub glasses_reading: Option<f64>,
    pub glasses_sun: Option<f64>,
    pub face_centrality: Option<f64>,
    pub tilted: Option<f64>,
    pub close_up: Option<f64>,
    pub bbox_area_fraction: Option<f64>,
}

impl FaceFeatures {
    pub fn absent() -> Self {
        Self {
            shows_face: false,
            sharpness: None,
            face_focus: None,
            brightness: None,
            lighting: None,
            saturation: None,
            hue: None,
            hue_low_confidence: [false; 4],
            emotion_probs: None,
            smile: None,
            age: None,
            sex_female: None,
            race: None,
            glasses_reading: None,
            glasses_sun: None,
            face_centrality: None,
            tilted: None,
            close_up: None,
            bbox_area_fraction: None,
        }
    }
}

/// Run every face-dependent extractor; undetected faces yield the absent
/// record (not an error).
pub fn extract_face(
    image: &ImageBuffer,
    annotation: &FaceAnnotation,
    model: &EigenfacesModel,
) -> Result<FaceFeatures, FaceFeatureError> {
    if !annotation.detected {
        return Ok(FaceFeatures::absent());
    }
    let bbox = require_face(annotation)?;
    let presentation = self_presentation(image, annotation);
    let (brightness, saturation) = region_brightness_saturation(image, annotation)?;
    let (hue, hue_low_confidence) = landmark_hues(image, annotation)?;
    let emotion_probs = model.classify(&crop_face(image, bbox))?;
    let flag = |b: Option<bool>| b.map(|b| if b { 1.0 } else { 0.0 });
    Ok(FaceFeatures {
        shows_face: true,
        sharpness: Some(landmark_sharpness(image, annotation)?),
        face_focus: Some(face_focus(image, annotation)?),
        brightness: Some(brightness),
        lighting: Some(region_lighting(image, annotation)?),
        saturation: Some(saturation),
        hue: Some(hue),
        hue_low_confidence,
        emotion_probs: Some(emotion_probs),
        smile: annotation.smile,
        age: annotation.age,
        sex_female: annotation.sex.map(|s| if s.sex == Sex::Female { 1.0 } else { 0.0 }),
        race: annotation.race.map(|r| [r.caucasian, r.black, r.asian]),
        glasses_reading: flag(presentation.glasses_reading),
        glasses_sun: flag(presentation.glasses_sun),
        face_centrality: presentation.face_centrality,
        tilted: flag(presentation.tilted),
        close_up: flag(presentation.close_up),
        bbox_area_fraction: presentation.bbox_area_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{Landmarks, Point, RaceProbs, SexGuess};
    use crate::features::visual::box_blur;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Detected annotation with landmarks at canonical positions in a bbox.
    fn annotation_for_bbox(bbox: Region) -> FaceAnnotation {
        let x = |f: f64| bbox.x0 as f64 + f * bbox.width() as f64;
        let y = |f: f64| bbox.y0 as f64 + f * bbox.height() as f64;
        FaceAnnotation {
            detected: true,
            bbox: Some(bbox),
            landmarks: Some(Landmarks {
                left_eye: Point { x: x(0.3), y: y(0.35) },
                right_eye: Point { x: x(0.7), y: y(0.35) },
                nose: Point { x: x(0.5), y: y(0.55) },
                mouth: Point { x: x(0.5), y: y(0.75) },
            }),
            smile: Some(0.5),
            age: Some(30.0),
            sex: Some(SexGuess { sex: Sex::Female, confidence: 0.9 }),
            race: Some(RaceProbs { caucasian: 0.5, black: 0.3, asian: 0.2 }),
            glasses: Some(Glasses::None),
            tilt_deg: Some(0.0),
        }
    }

    fn textured(seed: u64, w: u32, h: u32) -> ImageBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageBuffer::from_fn(w, h, |_, _| [rng.gen(), rng.gen(), rng.gen()])
    }

    #[test]
    fn no_face_is_an_error_for_region_ops() {
        let img = ImageBuffer::solid(32, 32, [1, 1, 1]);
        let none = FaceAnnotation::undetected();
        assert!(matches!(
            landmark_sharpness(&img, &none),
            Err(FaceFeatureError::NoFace)
        ));
        assert!(matches!(
            region_brightness_saturation(&img, &none),
            Err(FaceFeatureError::NoFace)
        ));
        assert!(matches!(face_focus(&img, &none), Err(FaceFeatureError::NoFace)));
    }

    #[test]
    fn blurred_mouth_scores_below_eyes() {
        let base = textured(1, 96, 96);
        let ann = annotation_for_bbox(Region::new(16, 16, 80, 80));
        let mouth = ann.landmarks.unwrap().mouth;
        let blurred = box_blur(&base, 4);
        // paste the blurred patch over the mouth window only
        let img = ImageBuffer::from_fn(96, 96, |x, y| {
            let dx = x as f64 - mouth.x;
            let dy = y as f64 - mouth.y;
            if dx.abs() <= 12.0 && dy.abs() <= 12.0 {
                blurred.pixel(x, y)
            } else {
                base.pixel(x, y)
            }
        });
        let [eyes, _, mouth_sharp] = landmark_sharpness(&img, &ann).unwrap();
        assert!(mouth_sharp < eyes, "mouth {mouth_sharp} vs eyes {eyes}");
    }

    #[test]
    fn fully_blurred_image_scores_near_zero() {
        let img = box_blur(&textured(2, 96, 96), 6);
        let ann = annotation_for_bbox(Region::new(16, 16, 80, 80));
        for s in landmark_sharpness(&img, &ann).unwrap() {
            assert!(s < 0.1, "sharpness {s}");
        }
    }

    #[test]
    fn focus_ratio_separates_sharp_face_from_blurred_background() {
        let sharp = textured(3, 96, 96);
        let blurred = box_blur(&sharp, 5);
        let bbox = Region::new(24, 24, 72, 72);
        let img = ImageBuffer::from_fn(96, 96, |x, y| {
            if bbox.contains(x as f64, y as f64) {
                sharp.pixel(x, y)
            } else {
                blurred.pixel(x, y)
            }
        });
        let ann = annotation_for_bbox(bbox);
        let focus = face_focus(&img, &ann).unwrap().unwrap();
        assert!(focus > 1.0, "focus {focus}");

        let uniform = ImageBuffer::solid(96, 96, [120, 120, 120]);
        assert_eq!(face_focus(&uniform, &ann).unwrap().unwrap(), 0.0);

        let even = textured(4, 96, 96);
        let focus_even = face_focus(&even, &ann).unwrap().unwrap();
        assert!((focus_even - 1.0).abs() < 0.2, "focus {focus_even}");
    }

    #[test]
    fn full_image_bbox_has_undefined_focus() {
        let img = textured(5, 48, 48);
        let ann = annotation_for_bbox(Region::new(0, 0, 48, 48));
        assert_eq!(face_focus(&img, &ann).unwrap(), None);
    }

    #[test]
    fn white_oval_on_black_is_bright_and_unsaturated() {
        let bbox = Region::new(16, 12, 48, 52);
        let (cx, cy) = bbox.center();
        let img = ImageBuffer::from_fn(64, 64, |x, y| {
            let dx = (x as f64 + 0.5 - cx) / (bbox.width() as f64 / 2.0);
            let dy = (y as f64 + 0.5 - cy) / (bbox.height() as f64 / 2.0);
            if dx * dx + dy * dy <= 1.0 {
                [255, 255, 255]
            } else {
                [0, 0, 0]
            }
        });
        let ann = annotation_for_bbox(bbox);
        let (brightness, saturation) = region_brightness_saturation(&img, &ann).unwrap();
        assert!(brightness[3] > 0.98, "oval brightness {}", brightness[3]);
        assert!(saturation[3] < 0.02, "oval saturation {}", saturation[3]);
    }

    #[test]
    fn red_mouth_window_is_saturated_with_hue_near_zero() {
        let bbox = Region::new(16, 16, 80, 80);
        let ann = annotation_for_bbox(bbox);
        let mouth = ann.landmarks.unwrap().mouth;
        let img = ImageBuffer::from_fn(96, 96, |x, y| {
            let dx = x as f64 - mouth.x;
            let dy = y as f64 - mouth.y;
            if dx.abs() <= 8.0 && dy.abs() <= 8.0 {
                [255, 0, 0]
            } else {
                [128, 128, 128]
            }
        });
        let (_, saturation) = region_brightness_saturation(&img, &ann).unwrap();
        assert!(saturation[2] > 0.99, "mouth saturation {}", saturation[2]);
        let (hues, flags) = landmark_hues(&img, &ann).unwrap();
        let dist = hues[2].min(360.0 - hues[2]);
        assert!(dist <= 2.0, "mouth hue {}", hues[2]);
        assert!(!flags[2]);
    }

    #[test]
    fn circular_mean_wraps_at_zero() {
        // equal mass at 350 and 10 degrees: the mean is 0, not 180
        let a = crate::imaging::from_hsv(crate::imaging::HsvPixel {
            hue: 350.0,
            saturation: 1.0,
            value: 1.0,
        });
        let b = crate::imaging::from_hsv(crate::imaging::HsvPixel {
            hue: 10.0,
            saturation: 1.0,
            value: 1.0,
        });
        let (hue, flag) = circular_mean_hue([a, b].into_iter());
        let dist = hue.min(360.0 - hue);
        assert!(dist < 1.0, "hue {hue}");
        assert!(!flag);
    }

    #[test]
    fn achromatic_window_yields_zero_hue_low_confidence() {
        let (hue, flag) = circular_mean_hue(std::iter::repeat_n([77, 77, 77], 50));
        assert_eq!(hue, 0.0);
        assert!(flag);
    }

    #[test]
    fn self_presentation_rules() {
        let img = ImageBuffer::solid(100, 100, [9, 9, 9]);
        let undetected = self_presentation(&img, &FaceAnnotation::undetected());
        assert!(!undetected.shows_face);
        assert_eq!(undetected.face_centrality, None);

        // exactly centered box
        let mut ann = annotation_for_bbox(Region::new(30, 30, 70, 70));
        let p = self_presentation(&img, &ann);
        assert_eq!(p.face_centrality, Some(1.0));
        // 40x40 of 100x100 = 16% area, below the close-up cut
        assert_eq!(p.close_up, Some(false));
        assert_eq!(p.tilted, Some(false));

        // 30% area is a close-up; tilt sign must not matter
        ann.bbox = Some(Region::new(20, 20, 75, 75));
        ann.tilt_deg = Some(-14.0);
        let p = self_presentation(&img, &ann);
        assert!(p.bbox_area_fraction.unwrap() >= 0.25);
        assert_eq!(p.close_up, Some(true));
        assert_eq!(p.tilted, Some(true));
        ann.tilt_deg = Some(14.0);
        assert_eq!(self_presentation(&img, &ann).tilted, Some(true));
    }

    #[test]
    fn uniqueness_zero_at_mean_and_one_at_one_sigma() {
        let vectors = vec![
            vec![0.1, 2.0, 30.0],
            vec![0.2, 4.0, 10.0],
            vec![0.3, 6.0, 20.0],
        ];
        let stats = CorpusStats::from_vectors(&vectors).unwrap();
        assert!(uniqueness(&stats.mean.clone(), &stats).unwrap() < 1e-12);

        let one_sigma: Vec<f64> = stats
            .mean
            .iter()
            .zip(&stats.std)
            .map(|(m, s)| m + s)
            .collect();
        assert!((uniqueness(&one_sigma, &stats).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distinct_picture_has_highest_uniqueness() {
        let mut vectors = vec![vec![1.0, 1.0, 1.0]; 9];
        vectors.push(vec![5.0, -2.0, 3.0]);
        let stats = CorpusStats::from_vectors(&vectors).unwrap();
        let scores: Vec<f64> = vectors
            .iter()
            .map(|v| uniqueness(v, &stats).unwrap())
            .collect();
        let max = scores.iter().copied().fold(f64::MIN, f64::max);
        assert_eq!(scores[9], max);
        assert!(scores[9] > scores[0]);
    }

    #[test]
    fn uniqueness_invariant_under_affine_feature_rescale() {
        let vectors = vec![
            vec![0.5, 10.0],
            vec![0.7, 30.0],
            vec![0.2, 20.0],
            vec![0.9, 25.0],
        ];
        let rescaled: Vec<Vec<f64>> = vectors
            .iter()
            .map(|v| vec![v[0] * 7.0 - 3.0, v[1]])
            .collect();
        let stats_a = CorpusStats::from_vectors(&vectors).unwrap();
        let stats_b = CorpusStats::from_vectors(&rescaled).unwrap();
        for (a, b) in vectors.iter().zip(&rescaled) {
            let ua = uniqueness(a, &stats_a).unwrap();
            let ub = uniqueness(b, &stats_b).unwrap();
            assert!((ua - ub).abs() < 1e-9, "{ua} vs {ub}");
        }
    }

    #[test]
    fn all_zero_std_corpus_is_degenerate() {
        let vectors = vec![vec![1.0, 2.0]; 5];
        let stats = CorpusStats::from_vectors(&vectors).unwrap();
        assert!(matches!(
            uniqueness(&[1.0, 2.0], &stats),
            Err(FaceFeatureError::DegenerateCorpus)
        ));
    }
}
