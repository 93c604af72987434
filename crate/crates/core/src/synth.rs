//! Seeded synthetic data: the bundled emotion training corpus, planted
//! feature/target corpora for calibration tests, and the demo dataset the
//! CLI can generate.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cluster::TargetScores;
use crate::features::eigenfaces::CROP_LEN;
use crate::imaging::{encode_png, ImageBuffer};
use crate::manifest::EIGENFACE_SIDE;
use crate::predict::PlaceVector;
use crate::ratings::{AmbianceRatings, RatingSet, DIMENSION_COUNT};

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

// ---------------------------------------------------------------------------
// Emotion corpus
// ---------------------------------------------------------------------------

fn emotion_pattern(label: usize, x: f64, y: f64) -> f64 {
    use std::f64::consts::TAU;
    let side = EIGENFACE_SIDE as f64;
    match label {
        0 => (TAU * x * 3.0 / side).sin(),
        1 => (TAU * y * 3.0 / side).sin(),
        2 => (TAU * (x + y) * 2.0 / side).sin(),
        3 => {
            let r = ((x - side / 2.0).powi(2) + (y - side / 2.0).powi(2)).sqrt();
            (TAU * r / 16.0).cos()
        }
        _ => (TAU * x * 1.5 / side).sin() * (TAU * y * 1.5 / side).sin(),
    }
}

/// Separable synthetic training crops: one spatial pattern per emotion with
/// per-sample noise and a random brightness offset.
pub fn emotion_corpus(seed: u64, per_class: usize) -> Vec<(Vec<f64>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(101));
    let mut corpus = Vec::with_capacity(5 * per_class);
    for label in 0..5 {
        for _ in 0..per_class {
            let offset = rng.gen_range(-0.1..0.1);
            let mut crop = Vec::with_capacity(CROP_LEN);
            for row in 0..EIGENFACE_SIDE {
                for col in 0..EIGENFACE_SIDE {
                    let base = emotion_pattern(label, col as f64, row as f64);
                    let value = 0.5 + 0.25 * base + 0.08 * gaussian(&mut rng) + offset;
                    crop.push(value.clamp(0.0, 1.0));
                }
            }
            corpus.push((crop, label));
        }
    }
    corpus
}

// ---------------------------------------------------------------------------
// Planted profile corpus
// ---------------------------------------------------------------------------

/// Always-present flattened slots the planted targets draw on (means of
/// face-independent features).
pub fn planted_feature_indices() -> [usize; 5] {
    let registry = crate::registry::FeatureRegistry::standard();
    [
        registry.index_of("contrast").unwrap(),
        registry.index_of("image_order").unwrap(),
        registry.index_of("symmetry").unwrap(),
        registry.index_of("edge_density").unwrap(),
        registry.index_of("saturation_std").unwrap(),
    ]
}

/// Per-place feature records with the planted slots tied to a shared latent
/// trait; `face_rate` controls how many pictures carry a face.
pub fn planted_place_pictures(
    place_index: usize,
    n_pictures: usize,
    face_rate: f64,
    seed: u64,
) -> Vec<crate::registry::PictureFeatures> {
    use crate::registry::{FeatureRegistry, FeatureValue, PictureFeatures, FEATURE_COUNT};
    let mut rng = ChaCha8Rng::seed_from_u64(
        seed.wrapping_mul(0x1000_0001)
            .wrapping_add(place_index as u64),
    );
    let registry = FeatureRegistry::standard();
    let latent: f64 = rng.gen_range(0.0..1.0);
    let planted = planted_feature_indices();
    let planted_base: Vec<f64> = (0..5)
        .map(|_| latent + 0.35 * 0.29 * gaussian(&mut rng))
        .collect();
    let place_base: Vec<f64> = (0..FEATURE_COUNT).map(|_| rng.gen_range(0.0..1.0)).collect();

    (0..n_pictures)
        .map(|pic| {
            let face = rng.gen_bool(face_rate);
            let mut values = Vec::with_capacity(FEATURE_COUNT);
            for (slot, desc) in registry.descriptors().iter().enumerate() {
                if desc.name == "shows_face" {
                    values.push(FeatureValue::Present(if face { 1.0 } else { 0.0 }));
                    continue;
                }
                if desc.face_dependent && !face {
                    values.push(FeatureValue::Missing);
                    continue;
                }
                let base = match planted.iter().position(|&p| p == slot) {
                    Some(j) => planted_base[j],
                    None => place_base[slot],
                };
                values.push(FeatureValue::Present(base + 0.05 * gaussian(&mut rng)));
            }
            PictureFeatures::new(
                format!("place{place_index:02}_pic{pic:02}"),
                format!("planted-{place_index}-{pic}"),
                values,
            )
        })
        .collect()
}

/// Targets that are exactly linear in the five planted flattened features
/// plus seeded Gaussian noise of per-dimension scale, squashed onto [0,1].
pub fn planted_targets(
    vectors: &[PlaceVector],
    noise_per_dim: &[f64],
    seed: u64,
) -> Vec<TargetScores> {
    let planted = planted_feature_indices();
    let n = vectors.len() as f64;
    let means: Vec<f64> = planted
        .iter()
        .map(|&f| vectors.iter().filter_map(|v| v.values[f]).sum::<f64>() / n)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(7_919).wrapping_add(13));
    let signs: Vec<f64> = noise_per_dim
        .iter()
        .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    vectors
        .iter()
        .map(|vector| {
            let values = noise_per_dim
                .iter()
                .enumerate()
                .map(|(d, sigma)| {
                    let signal: f64 = planted
                        .iter()
                        .zip(&means)
                        .map(|(&f, m)| 0.15 * (vector.values[f].unwrap_or(*m) - m))
                        .sum();
                    (0.5 + signs[d] * signal + sigma * gaussian(&mut rng)).clamp(0.0, 1.0)
                })
                .collect();
            TargetScores {
                place_id: vector.place_id.clone(),
                values,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Demo dataset
// ---------------------------------------------------------------------------

/// Bright face oval on a dark background; the stub annotates these as
/// detected with the bbox over the oval.
pub fn face_picture(seed: u64, size: u32) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cx = size as f64 * rng.gen_range(0.35..0.65);
    let cy = size as f64 * rng.gen_range(0.35..0.65);
    let rx = size as f64 * rng.gen_range(0.16..0.24);
    let ry = rx * rng.gen_range(1.1..1.4);
    let skin = [
        rng.gen_range(190..240) as u8,
        rng.gen_range(150..210) as u8,
        rng.gen_range(120..180) as u8,
    ];
    let bg = [
        rng.gen_range(10..60) as u8,
        rng.gen_range(10..60) as u8,
        rng.gen_range(10..70) as u8,
    ];
    ImageBuffer::from_fn(size, size, |x, y| {
        let dx = (x as f64 + 0.5 - cx) / rx;
        let dy = (y as f64 + 0.5 - cy) / ry;
        if dx * dx + dy * dy <= 1.0 {
            skin
        } else {
            bg
        }
    })
}

/// Faceless texture: gradients, stripes, or speckle, weighted by a style
/// latent so places differ systematically.
pub fn texture_picture(seed: u64, size: u32, latent: f64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let style = rng.gen_range(0..3);
    let hue_shift = (latent * 160.0) as u8;
    match style {
        0 => ImageBuffer::from_fn(size, size, |x, _| {
            let v = (x * 255 / size) as u8;
            [v, v.wrapping_add(hue_shift), 255 - v]
        }),
        1 => {
            let stripe = rng.gen_range(2..6);
            ImageBuffer::from_fn(size, size, |x, y| {
                if ((x / stripe) + (y / stripe)) % 2 == 0 {
                    [hue_shift, 200, 120]
                } else {
                    [40, 40, 60]
                }
            })
        }
        _ => {
            let base = rng.gen_range(60..180) as u8;
            let mut jitter = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            ImageBuffer::from_fn(size, size, |_, _| {
                let n = jitter.gen_range(0..80) as u8;
                [base.saturating_add(n), base, hue_shift.saturating_add(n / 2)]
            })
        }
    }
}

/// Write a complete synthetic dataset: `places/<id>/pics/*.png`, a ratings
/// CSV with both rating sets, and the default relabel config. The ratings
/// correlate with each place's image style so the pipeline finds signal.
pub fn generate_demo_dataset(
    root: &Path,
    n_places: usize,
    pictures_per_place: usize,
    seed: u64,
) -> std::io::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::fs::create_dir_all(root)?;
    std::fs::write(root.join("relabel.conf"), crate::cluster::DEFAULT_RELABEL_CONF)?;
    std::fs::write(
        root.join("dataset.toml"),
        format!(
            "manifest_version = \"{}\"\n",
            crate::manifest::MANIFEST_VERSION
        ),
    )?;

    let mut ratings_rows = Vec::new();
    for place in 0..n_places {
        let place_id = format!("place_{place:02}");
        let latent: f64 = rng.gen_range(0.0..1.0);
        let face_rate = 0.3 + 0.5 * latent;
        let pics_dir = root.join("places").join(&place_id).join("pics");
        std::fs::create_dir_all(&pics_dir)?;
        for pic in 0..pictures_per_place {
            let pic_seed = seed
                .wrapping_mul(6_364_136_223_846_793_005)
                .wrapping_add((place * 1_000 + pic) as u64);
            let image = if rng.gen_bool(face_rate) {
                face_picture(pic_seed, 64)
            } else {
                texture_picture(pic_seed, 64, latent)
            };
            std::fs::write(pics_dir.join(format!("pic_{pic:02}.png")), encode_png(&image))?;
        }
        for set in [RatingSet::FaceDriven, RatingSet::OnTheSpot] {
            let wobble = if set == RatingSet::FaceDriven { 0.12 } else { 0.08 };
            let values = (0..DIMENSION_COUNT)
                .map(|d| {
                    let amplitude = 0.35 * ((d % 7) as f64 / 6.0 - 0.5) * 2.0;
                    (0.5 + amplitude * (latent - 0.5) + wobble * gaussian(&mut rng))
                        .clamp(0.0, 1.0)
                })
                .collect();
            ratings_rows.push(AmbianceRatings {
                place_id: place_id.clone(),
                rating_set: set,
                values,
            });
        }
    }
    std::fs::write(
        root.join("ratings.csv"),
        crate::ratings::render_ratings_csv(&ratings_rows),
    )?;
    Ok(())
}
