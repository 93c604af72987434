//! Face-independent stylistic extractors: camera shake, contrast, order and
//! complexity, level of detail, symmetry, circular shapes, and color-name
//! histograms.
//!
//! All extractors analyze at most a 512-px-long side: larger inputs are
//! box-averaged down by an integer factor first (see
//! `ImageBuffer::downsample_to`), which also makes a 2x nearest-neighbor
//! upscale of a full-size image analyze identically to the original.

use serde::{Deserialize, Serialize};

use crate::imaging::{to_hsv, ImageBuffer, ImagingError};
use crate::manifest::{
    ANALYSIS_MAX_DIM, BIRKHOFF_EPSILON, COLOR_BLACK_VALUE, COLOR_BROWN_VALUE,
    COLOR_GRAY_SATURATION, COLOR_WHITE_VALUE, EDGE_THRESHOLD, HOUGH_EDGE_THRESHOLD,
    HOUGH_ALIGNMENT, HOUGH_COVERAGE_BINS, HOUGH_MIN_COVERAGE, HOUGH_MIN_RADIUS, HOUGH_NMS_CENTER, HOUGH_NMS_RADIUS,
    HOUGH_VOTE_FRACTION, HUE_ENTROPY_BINS,
    ORDER_BINS, SEGMENT_TAU, SHARPNESS_C,
};

pub const COLOR_NAMES: [&str; 11] = [
    "black", "blue", "brown", "green", "gray", "orange", "pink", "purple", "red", "white",
    "yellow",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VisualFeatures {
    pub camera_shake: f64,
    pub contrast: f64,
    pub image_order: f64,
    pub image_complexity: f64,
    pub birkhoff_ratio: f64,
    /// Raw segmentation region count (scales with image area).
    pub level_of_detail: u64,
    /// Region count / pixel count, the scale-comparable form.
    pub level_of_detail_normalized: f64,
    pub symmetry: f64,
    pub circle_count: u32,
    /// Fractions over {black, blue, brown, green, gray, orange, pink,
    /// purple, red, white, yellow}; sums to 1.
    pub color_name_hist: [f64; 11],
    pub contrast_rgb: [f64; 3],
    pub edge_density: f64,
    pub hue_entropy: f64,
    pub saturation_std: f64,
}

/// A scalar plane with replicate-border sampling.
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Plane {
    fn luma(img: &ImageBuffer) -> Plane {
        Plane {
            w: img.width() as usize,
            h: img.height() as usize,
            data: img.luminance_plane(),
        }
    }

    #[inline]
    fn at(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.data[y * self.w + x]
    }

    fn len(&self) -> usize {
        self.data.len()
    }
}

fn sobel(plane: &Plane) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (plane.w, plane.h);
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dx: isize, dy: isize| plane.at(x + dx, y + dy);
            let sx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let sy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            gx[y as usize * w + x as usize] = sx;
            gy[y as usize * w + x as usize] = sy;
        }
    }
    (gx, gy)
}

/// Mean squared 4-neighbor Laplacian response over a plane.
fn laplacian_energy(plane: &Plane) -> f64 {
    let mut sum = 0.0;
    for y in 0..plane.h as isize {
        for x in 0..plane.w as isize {
            let l = plane.at(x - 1, y) + plane.at(x + 1, y) + plane.at(x, y - 1)
                + plane.at(x, y + 1)
                - 4.0 * plane.at(x, y);
            sum += l * l;
        }
    }
    sum / plane.len() as f64
}

/// Shared s/(s+c) map: 0 = no detail energy, 1 = plenty.
pub(crate) fn sharpness_score(mean_sq_response: f64) -> f64 {
    mean_sq_response / (mean_sq_response + SHARPNESS_C)
}

/// Blur proxy in [0,1]: 1 - s/(s+c) over the Laplacian energy of luminance.
/// Higher means blurrier; a flat image scores 1.
pub fn camera_shake(image: &ImageBuffer) -> Result<f64, ImagingError> {
    image.require_min_size(3, 3)?;
    let image = image.downsample_to(ANALYSIS_MAX_DIM);
    Ok(1.0 - sharpness_score(laplacian_energy(&Plane::luma(&image))))
}

fn stddev(values: impl Iterator<Item = f64> + Clone, n: usize) -> f64 {
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    var.sqrt()
}

/// 2 * stddev of luminance, clamped to [0,1].
pub fn contrast(image: &ImageBuffer) -> Result<f64, ImagingError> {
    image.require_min_size(1, 1)?;
    let image = image.downsample_to(ANALYSIS_MAX_DIM);
    let lum = image.luminance_plane();
    Ok((2.0 * stddev(lum.iter().copied(), lum.len())).clamp(0.0, 1.0))
}

fn contrast_per_channel(image: &ImageBuffer) -> [f64; 3] {
    let n = image.pixels().len();
    let mut out = [0.0; 3];
    for (c, slot) in out.iter_mut().enumerate() {
        *slot = (2.0 * stddev(
            image.pixels().iter().map(|p| p[c] as f64 / 255.0),
            n,
        ))
        .clamp(0.0, 1.0);
    }
    out
}

/// (order, complexity, birkhoff ratio).
///
/// Order is one minus the normalized Shannon entropy of a 64-bin luminance
/// histogram; complexity is the fraction of pixels whose Sobel magnitude
/// exceeds the manifest edge threshold; the ratio is order/(complexity+eps).
pub fn order_complexity(image: &ImageBuffer) -> Result<(f64, f64, f64), ImagingError> {
    image.require_min_size(8, 8)?;
    let image = image.downsample_to(ANALYSIS_MAX_DIM);
    let plane = Plane::luma(&image);

    let mut bins = [0u64; ORDER_BINS];
    for &v in &plane.data {
        let idx = ((v * ORDER_BINS as f64) as usize).min(ORDER_BINS - 1);
        bins[idx] += 1;
    }
    let total = plane.len() as f64;
    let mut entropy = 0.0;
    for &count in &bins {
        if count > 0 {
            let p = count as f64 / total;
            entropy -= p * p.ln();
        }
    }
    let order = (1.0 - entropy / (ORDER_BINS as f64).ln()).clamp(0.0, 1.0);

    let (gx, gy) = sobel(&plane);
    let edges = gx
        .iter()
        .zip(&gy)
        .filter(|(x, y)| (*x * *x + *y * *y).sqrt() > EDGE_THRESHOLD)
        .count();
    let complexity = edges as f64 / total;

    Ok((order, complexity, order / (complexity + BIRKHOFF_EPSILON)))
}

/// Mean Sobel magnitude; a continuous companion to the thresholded
/// complexity metric.
pub fn edge_density(image: &ImageBuffer) -> Result<f64, ImagingError> {
    image.require_min_size(3, 3)?;
    let image = image.downsample_to(ANALYSIS_MAX_DIM);
    let plane = Plane::luma(&image);
    let (gx, gy) = sobel(&plane);
    let sum: f64 = gx.iter().zip(&gy).map(|(x, y)| (x * x + y * y).sqrt()).sum();
    Ok(sum / plane.len() as f64)
}

/// Number of connected components after 4-neighbor flood fill merging
/// pixels whose RGB Euclidean distance is at most the manifest tau.
pub fn level_of_detail(image: &ImageBuffer) -> Result<(u64, f64), ImagingError> {
    image.require_min_size(4, 4)?;
    let image = image.downsample_to(ANALYSIS_MAX_DIM);
    let (w, h) = (image.width() as usize, image.height() as usize);
    let tau_sq = SEGMENT_TAU * SEGMENT_TAU;
    let close = |a: [u8; 3], b: [u8; 3]| -> bool {
        let dr = a[0] as f64 - b[0] as f64;
        let dg = a[1] as f64 - b[1] as f64;
        let db = a[2] as f64 - b[2] as f64;
        dr * dr + dg * dg + db * db <= tau_sq
    };
    let mut visited = vec![false; w * h];
    let mut stack = Vec::new();
    let mut regions = 0u64;
    for start in 0..w * h {
        if visited[start] {
            continue;
        }
        regions += 1;
        visited[start] = true;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            let (x, y) = (idx % w, idx / w);
            let here = image.pixel(x as u32, y as u32);
            let mut push = |nx: usize, ny: usize| {
                let nidx = ny * w + nx;
                if !visited[nidx] && close(here, image.pixel(nx as u32, ny as u32)) {
                    visited[nidx] = true;
                    stack.push(nidx);
                }
            };
            if x > 0 {
                push(x - 1, y);
            }
            if x + 1 < w {
                push(x + 1, y);
            }
            if y > 0 {
                push(x, y - 1);
            }
            if y + 1 < h {
                push(x, y + 1);
            }
        }
    }
    Ok((regions, regions as f64 / (w * h) as f64))
}

/// Left-right reflective symmetry: 1 - mean |lum(x,y) - lum(w-1-x,y)|.
pub fn symmetry(image: &ImageBuffer) -> Result<f64, ImagingError> {
    image.require_min_size(1, 1)?;
    let image = image.downsample_to(ANALYSIS_MAX_DIM);
    let plane = Plane::luma(&image);
    let (w, h) = (plane.w, plane.h);
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            sum += (plane.data[y * w + x] - plane.data[y * w + (w - 1 - x)]).abs();
        }
    }
    Ok((1.0 - sum / plane.len() as f64).clamp(0.0, 1.0))
}

/// Circle count via a gradient-direction Hough transform. Each edge pixel
/// votes along its gradient line at every scanned radius; accumulator peaks
/// above the manifest vote fraction survive non-maximum suppression.
pub fn detect_circles(image: &ImageBuffer) -> Result<u32, ImagingError> {
    image.require_min_size(16, 16)?;
    let image = image.downsample_to(ANALYSIS_MAX_DIM);
    let plane = Plane::luma(&image);
    let (w, h) = (plane.w, plane.h);
    let (gx, gy) = sobel(&plane);

    let mut edges = Vec::new();
    for idx in 0..w * h {
        let mag = (gx[idx] * gx[idx] + gy[idx] * gy[idx]).sqrt();
        if mag > HOUGH_EDGE_THRESHOLD {
            edges.push((idx % w, idx / w, gx[idx] / mag, gy[idx] / mag));
        }
    }

    let r_max = (w.min(h) / 3).max(HOUGH_MIN_RADIUS as usize);
    let mut accumulator = vec![0u32; w * h];
    struct Peak {
        votes: u32,
        x: usize,
        y: usize,
        r: usize,
    }
    let mut peaks: Vec<Peak> = Vec::new();

    // a candidate survives only if enough edge pixels sit in its radius band
    // with radially aligned gradients AND they wrap most of the way around
    // the center; accumulator echoes from a circle scanned at the wrong
    // radius concentrate in a narrow arc and fail the coverage check
    let aligned_support = |cx: f64, cy: f64, r: f64| -> (u32, usize) {
        let mut aligned = 0u32;
        let mut sectors = [false; HOUGH_COVERAGE_BINS];
        for &(x, y, ux, uy) in &edges {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let dist = (dx * dx + dy * dy).sqrt();
            if dist > 0.0 && (dist - r).abs() <= 1.5 {
                let radial = (dx * ux + dy * uy) / dist;
                if radial.abs() >= HOUGH_ALIGNMENT {
                    aligned += 1;
                    let angle = dy.atan2(dx).rem_euclid(std::f64::consts::TAU);
                    let bin = ((angle / std::f64::consts::TAU * HOUGH_COVERAGE_BINS as f64)
                        as usize)
                        .min(HOUGH_COVERAGE_BINS - 1);
                    sectors[bin] = true;
                }
            }
        }
        (aligned, sectors.iter().filter(|s| **s).count())
    };
    let min_sectors = (HOUGH_MIN_COVERAGE * HOUGH_COVERAGE_BINS as f64).ceil() as usize;

    for r in HOUGH_MIN_RADIUS as usize..=r_max {
        accumulator.iter_mut().for_each(|v| *v = 0);
        let rf = r as f64;
        for &(x, y, ux, uy) in &edges {
            for dir in [-1.0, 1.0] {
                let cx = (x as f64 + dir * rf * ux).round();
                let cy = (y as f64 + dir * rf * uy).round();
                if cx >= 0.0 && cy >= 0.0 && (cx as usize) < w && (cy as usize) < h {
                    accumulator[cy as usize * w + cx as usize] += 1;
                }
            }
        }
        // 3x3 pooled votes absorb quantization scatter around true centers
        let threshold = (HOUGH_VOTE_FRACTION * std::f64::consts::TAU * rf).ceil() as u32;
        for y in 1..h.saturating_sub(1) {
            for x in 1..w.saturating_sub(1) {
                let mut pooled = 0u32;
                let mut is_local_max = true;
                let center = accumulator[y * w + x];
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let v = accumulator[(y as isize + dy) as usize * w
                            + (x as isize + dx) as usize];
                        pooled += v;
                        if v > center {
                            is_local_max = false;
                        }
                    }
                }
                if is_local_max && center > 0 && pooled >= threshold {
                    let (support, sectors) = aligned_support(x as f64, y as f64, rf);
                    if support >= threshold && sectors >= min_sectors {
                        peaks.push(Peak {
                            votes: support,
                            x,
                            y,
                            r,
                        });
                    }
                }
            }
        }
    }

    peaks.sort_by(|a, b| {
        b.votes
            .cmp(&a.votes)
            .then(a.r.cmp(&b.r))
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
    });
    let mut accepted: Vec<&Peak> = Vec::new();
    for peak in &peaks {
        let suppressed = accepted.iter().any(|kept| {
            let dx = kept.x as f64 - peak.x as f64;
            let dy = kept.y as f64 - peak.y as f64;
            let dr = (kept.r as f64 - peak.r as f64).abs();
            (dx * dx + dy * dy).sqrt() <= HOUGH_NMS_CENTER && dr <= HOUGH_NMS_RADIUS
        });
        if !suppressed {
            accepted.push(peak);
        }
    }
    Ok(accepted.len() as u32)
}

/// Index into [`COLOR_NAMES`] for one pixel using the manifest HSV rules.
pub fn color_name_index(rgb: [u8; 3]) -> usize {
    let hsv = to_hsv(rgb);
    if hsv.value < COLOR_BLACK_VALUE {
        return 0; // black
    }
    if hsv.saturation < COLOR_GRAY_SATURATION {
        return if hsv.value > COLOR_WHITE_VALUE { 9 } else { 4 }; // white / gray
    }
    let h = hsv.hue;
    if !(15.0..345.0).contains(&h) {
        8 // red
    } else if h < 45.0 {
        if hsv.value < COLOR_BROWN_VALUE {
            2 // brown
        } else {
            5 // orange
        }
    } else if h < 70.0 {
        10 // yellow
    } else if h < 165.0 {
        3 // green
    } else if h < 260.0 {
        1 // blue
    } else if h < 300.0 {
        7 // purple
    } else {
        6 // pink
    }
}

/// Normalized 11-bin color-name histogram.
pub fn color_names(image: &ImageBuffer) -> Result<[f64; 11], ImagingError> {
    image.require_min_size(1, 1)?;
    let image = image.downsample_to(ANALYSIS_MAX_DIM);
    let mut counts = [0u64; 11];
    for &p in image.pixels() {
        counts[color_name_index(p)] += 1;
    }
    let total = image.pixels().len() as f64;
    let mut hist = [0.0; 11];
    for (slot, count) in hist.iter_mut().zip(counts) {
        *slot = count as f64 / total;
    }
    Ok(hist)
}

/// Normalized entropy of a hue histogram over chromatic pixels.
fn hue_entropy(image: &ImageBuffer) -> f64 {
    let mut bins = vec![0u64; HUE_ENTROPY_BINS];
    let mut chromatic = 0u64;
    for &p in image.pixels() {
        let hsv = to_hsv(p);
        if hsv.saturation >= COLOR_GRAY_SATURATION && hsv.value >= COLOR_BLACK_VALUE {
            let idx =
                ((hsv.hue / 360.0 * HUE_ENTROPY_BINS as f64) as usize).min(HUE_ENTROPY_BINS - 1);
            bins[idx] += 1;
            chromatic += 1;
        }
    }
    if chromatic == 0 {
        return 0.0;
    }
    let mut entropy = 0.0;
    for &count in &bins {
        if count > 0 {
            let p = count as f64 / chromatic as f64;
            entropy -= p * p.ln();
        }
    }
    (entropy / (HUE_ENTROPY_BINS as f64).ln()).clamp(0.0, 1.0)
}

fn saturation_std(image: &ImageBuffer) -> f64 {
    let n = image.pixels().len();
    (2.0 * stddev(image.pixels().iter().map(|p| to_hsv(*p).saturation), n)).clamp(0.0, 1.0)
}

/// Run every face-independent extractor over one image.
pub fn extract_visual(image: &ImageBuffer) -> Result<VisualFeatures, ImagingError> {
    image.require_min_size(16, 16)?;
    let analysis = image.downsample_to(ANALYSIS_MAX_DIM);
    let (image_order, image_complexity, birkhoff_ratio) = order_complexity(&analysis)?;
    let (level_raw, level_norm) = level_of_detail(&analysis)?;
    Ok(VisualFeatures {
        camera_shake: camera_shake(&analysis)?,
        contrast: contrast(&analysis)?,
        image_order,
        image_complexity,
        birkhoff_ratio,
        level_of_detail: level_raw,
        level_of_detail_normalized: level_norm,
        symmetry: symmetry(&analysis)?,
        circle_count: detect_circles(&analysis)?,
        color_name_hist: color_names(&analysis)?,
        contrast_rgb: contrast_per_channel(&analysis),
        edge_density: edge_density(&analysis)?,
        hue_entropy: hue_entropy(&analysis),
        saturation_std: saturation_std(&analysis),
    })
}

/// Uniform box blur with the given radius; a test helper for the blur
/// monotonicity properties and fixture construction.
pub fn box_blur(image: &ImageBuffer, radius: u32) -> ImageBuffer {
    let r = radius as isize;
    let (w, h) = (image.width() as isize, image.height() as isize);
    ImageBuffer::from_fn(image.width(), image.height(), |x, y| {
        let mut sum = [0u32; 3];
        let mut count = 0u32;
        for dy in -r..=r {
            for dx in -r..=r {
                let nx = (x as isize + dx).clamp(0, w - 1) as u32;
                let ny = (y as isize + dy).clamp(0, h - 1) as u32;
                let p = image.pixel(nx, ny);
                sum[0] += p[0] as u32;
                sum[1] += p[1] as u32;
                sum[2] += p[2] as u32;
                count += 1;
            }
        }
        [
            ((sum[0] + count / 2) / count) as u8,
            ((sum[1] + count / 2) / count) as u8,
            ((sum[2] + count / 2) / count) as u8,
        ]
    })
}

/// Draw a 1-px circle outline (midpoint algorithm); fixture helper.
pub fn draw_circle(image: &mut [[u8; 3]], w: u32, cx: i32, cy: i32, r: i32, rgb: [u8; 3]) {
    let mut plot = |x: i32, y: i32| {
        if x >= 0 && y >= 0 {
            let idx = y as usize * w as usize + x as usize;
            if x < w as i32 && idx < image.len() {
                image[idx] = rgb;
            }
        }
    };
    let mut x = r;
    let mut y = 0;
    let mut err = 1 - r;
    while x >= y {
        for (px, py) in [
            (cx + x, cy + y),
            (cx + y, cy + x),
            (cx - y, cy + x),
            (cx - x, cy + y),
            (cx - x, cy - y),
            (cx - y, cy - x),
            (cx + y, cy - x),
            (cx + x, cy - y),
        ] {
            plot(px, py);
        }
        y += 1;
        if err < 0 {
            err += 2 * y + 1;
        } else {
            x -= 1;
            err += 2 * (y - x) + 1;
        }
    }
}
