//! Raster image representation, color conversion, and region addressing
//! shared by every feature extractor.
//!
//! Images are decoded once into 8-bit row-major RGB and treated as immutable
//! from then on, so extractor workers can share them freely.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("unsupported image format")]
    UnsupportedFormat,
    #[error("corrupt image data: {0}")]
    CorruptData(String),
    #[error("image too small: need at least {min_width}x{min_height}, got {width}x{height}")]
    ImageTooSmall {
        width: u32,
        height: u32,
        min_width: u32,
        min_height: u32,
    },
    #[error("empty image")]
    EmptyImage,
}

/// Decoded raster image: row-major 8-bit RGB triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    pixels: Vec<[u8; 3]>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, pixels: Vec<[u8; 3]>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::EmptyImage);
        }
        if pixels.len() != (width as usize) * (height as usize) {
            return Err(ImagingError::CorruptData(format!(
                "pixel count {} does not match {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Solid-color image, mostly used by tests and the demo generator.
    pub fn solid(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        Self::new(width, height, vec![rgb; (width * height) as usize]).expect("nonzero dims")
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity((width * height) as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels).expect("nonzero dims")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    /// Raw bytes in row-major RGB order; the content-hash input.
    pub fn raw_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.pixels.len() * 3);
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }

    /// Luminance plane in [0,1].
    pub fn luminance_plane(&self) -> Vec<f64> {
        self.pixels.iter().map(|p| luminance(*p)).collect()
    }

    pub fn require_min_size(&self, min_width: u32, min_height: u32) -> Result<(), ImagingError> {
        if self.width < min_width || self.height < min_height {
            return Err(ImagingError::ImageTooSmall {
                width: self.width,
                height: self.height,
                min_width,
                min_height,
            });
        }
        Ok(())
    }

    /// Box-average downsample by an integer factor so the longest side does
    /// not exceed `max_dim`. A factor of 1 returns a clone. Averaging whole
    /// k x k blocks keeps a 2x nearest-neighbor upscale of a `max_dim`-sized
    /// image bit-identical to the original after normalization.
    pub fn downsample_to(&self, max_dim: u32) -> ImageBuffer {
        let longest = self.width.max(self.height);
        let factor = longest.div_ceil(max_dim).max(1);
        if factor == 1 {
            return self.clone();
        }
        let nw = self.width.div_ceil(factor);
        let nh = self.height.div_ceil(factor);
        let mut pixels = Vec::with_capacity((nw * nh) as usize);
        for by in 0..nh {
            for bx in 0..nw {
                let x0 = bx * factor;
                let y0 = by * factor;
                let x1 = (x0 + factor).min(self.width);
                let y1 = (y0 + factor).min(self.height);
                let mut sum = [0u32; 3];
                let count = (x1 - x0) * (y1 - y0);
                for y in y0..y1 {
                    for x in x0..x1 {
                        let p = self.pixel(x, y);
                        sum[0] += p[0] as u32;
                        sum[1] += p[1] as u32;
                        sum[2] += p[2] as u32;
                    }
                }
                pixels.push([
                    ((sum[0] + count / 2) / count) as u8,
                    ((sum[1] + count / 2) / count) as u8,
                    ((sum[2] + count / 2) / count) as u8,
                ]);
            }
        }
        ImageBuffer::new(nw, nh, pixels).expect("nonzero dims")
    }

    /// Nearest-neighbor upscale by an integer factor.
    pub fn upscale_nearest(&self, factor: u32) -> ImageBuffer {
        assert!(factor >= 1);
        ImageBuffer::from_fn(self.width * factor, self.height * factor, |x, y| {
            self.pixel(x / factor, y / factor)
        })
    }

    pub fn mirror_horizontal(&self) -> ImageBuffer {
        ImageBuffer::from_fn(self.width, self.height, |x, y| {
            self.pixel(self.width - 1 - x, y)
        })
    }

    pub fn rotate_180(&self) -> ImageBuffer {
        ImageBuffer::from_fn(self.width, self.height, |x, y| {
            self.pixel(self.width - 1 - x, self.height - 1 - y)
        })
    }
}

/// Decode an encoded image file (PNG required, JPEG accepted) into 8-bit RGB.
/// Alpha, when present, is composited over white.
pub fn decode_image(bytes: &[u8]) -> Result<ImageBuffer, ImagingError> {
    let format = image::guess_format(bytes).map_err(|_| ImagingError::UnsupportedFormat)?;
    match format {
        image::ImageFormat::Png | image::ImageFormat::Jpeg => {}
        _ => return Err(ImagingError::UnsupportedFormat),
    }
    let decoded = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| ImagingError::CorruptData(e.to_string()))?;
    let rgba = decoded.to_rgba8();
    let (width, height) = rgba.dimensions();
    if width == 0 || height == 0 {
        return Err(ImagingError::EmptyImage);
    }
    let pixels = rgba
        .pixels()
        .map(|p| {
            let [r, g, b, a] = p.0;
            if a == 255 {
                [r, g, b]
            } else {
                // composite over white
                let blend = |c: u8| -> u8 {
                    let c = c as u32 * a as u32 + 255 * (255 - a as u32);
                    ((c + 127) / 255) as u8
                };
                [blend(r), blend(g), blend(b)]
            }
        })
        .collect();
    ImageBuffer::new(width, height, pixels)
}

/// Encode to PNG; used by the demo-dataset generator and test fixtures.
pub fn encode_png(img: &ImageBuffer) -> Vec<u8> {
    let mut raw = Vec::with_capacity(img.pixels().len() * 3);
    for p in img.pixels() {
        raw.extend_from_slice(p);
    }
    let buf: image::RgbImage =
        image::ImageBuffer::from_raw(img.width(), img.height(), raw).expect("size checked");
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .expect("in-memory PNG encode");
    out.into_inner()
}

/// Hue in degrees [0,360), saturation and value in [0,1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsvPixel {
    pub hue: f64,
    pub saturation: f64,
    pub value: f64,
}

/// Standard hexcone RGB -> HSV. Achromatic pixels get hue 0 so hue is a
/// total function.
pub fn to_hsv(rgb: [u8; 3]) -> HsvPixel {
    let r = rgb[0] as f64 / 255.0;
    let g = rgb[1] as f64 / 255.0;
    let b = rgb[2] as f64 / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let value = max;
    let saturation = if max > 0.0 { delta / max } else { 0.0 };
    let hue = if delta <= f64::EPSILON {
        0.0
    } else if max == r {
        60.0 * (((g - b) / delta).rem_euclid(6.0))
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    HsvPixel {
        hue: hue.rem_euclid(360.0),
        saturation,
        value,
    }
}

/// Inverse hexcone conversion; rounds each channel to the nearest step.
pub fn from_hsv(hsv: HsvPixel) -> [u8; 3] {
    let h = hsv.hue.rem_euclid(360.0) / 60.0;
    let c = hsv.value * hsv.saturation;
    let x = c * (1.0 - (h.rem_euclid(2.0) - 1.0).abs());
    let (r1, g1, b1) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = hsv.value - c;
    let to_u8 = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [to_u8(r1), to_u8(g1), to_u8(b1)]
}

/// Rec.601 luma in [0,1]; the single brightness definition used everywhere.
pub fn luminance(rgb: [u8; 3]) -> f64 {
    (0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64) / 255.0
}

/// Inclusive-exclusive pixel box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Region {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> u32 {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> u32 {
        self.y1.saturating_sub(self.y0)
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x0 + self.x1) as f64 / 2.0,
            (self.y0 + self.y1) as f64 / 2.0,
        )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 as f64 && x < self.x1 as f64 && y >= self.y0 as f64 && y < self.y1 as f64
    }

    /// Clamp to image bounds. Any region that overlaps the image keeps a
    /// non-empty box; a fully outside region collapses to the nearest 1x1.
    pub fn clamped(&self, width: u32, height: u32) -> Region {
        let x0 = self.x0.min(width - 1);
        let y0 = self.y0.min(height - 1);
        let x1 = self.x1.clamp(x0 + 1, width);
        let y1 = self.y1.clamp(y0 + 1, height);
        Region { x0, y0, x1, y1 }
    }

    /// Square window of side `size` centered at a landmark point, clamped.
    pub fn window(cx: f64, cy: f64, size: u32, width: u32, height: u32) -> Region {
        let half = (size / 2) as i64;
        let cx = cx.round() as i64;
        let cy = cy.round() as i64;
        let x0 = (cx - half).max(0) as u32;
        let y0 = (cy - half).max(0) as u32;
        Region {
            x0,
            y0,
            x1: (cx + half + 1).max(1) as u32,
            y1: (cy + half + 1).max(1) as u32,
        }
        .clamped(width, height)
    }

    /// Inflate by a fraction on every side (for landmark containment checks).
    pub fn inflated(&self, fraction: f64) -> Region {
        let dw = (self.width() as f64 * fraction).ceil() as u32;
        let dh = (self.height() as f64 * fraction).ceil() as u32;
        Region {
            x0: self.x0.saturating_sub(dw),
            y0: self.y0.saturating_sub(dh),
            x1: self.x1 + dw,
            y1: self.y1 + dh,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decode_solid_red_png() {
        let img = ImageBuffer::solid(2, 2, [255, 0, 0]);
        let png = encode_png(&img);
        let back = decode_image(&png).unwrap();
        assert_eq!(back.width(), 2);
        assert_eq!(back.height(), 2);
        assert!(back.pixels().iter().all(|p| *p == [255, 0, 0]));
    }

    #[test]
    fn decode_single_black_pixel() {
        let png = encode_png(&ImageBuffer::solid(1, 1, [0, 0, 0]));
        let back = decode_image(&png).unwrap();
        assert_eq!((back.width(), back.height()), (1, 1));
        assert_eq!(back.pixel(0, 0), [0, 0, 0]);
    }

    #[test]
    fn decodes_jpeg_too() {
        let img = ImageBuffer::solid(16, 16, [200, 60, 60]);
        let mut raw = Vec::new();
        for p in img.pixels() {
            raw.extend_from_slice(p);
        }
        let rgb: image::RgbImage =
            image::ImageBuffer::from_raw(16, 16, raw).unwrap();
        let mut bytes = std::io::Cursor::new(Vec::new());
        rgb.write_to(&mut bytes, image::ImageFormat::Jpeg).unwrap();
        let back = decode_image(&bytes.into_inner()).unwrap();
        assert_eq!((back.width(), back.height()), (16, 16));
        // lossy codec: channels land near the original
        let p = back.pixel(8, 8);
        assert!((p[0] as i32 - 200).abs() < 16, "{p:?}");
    }

    #[test]
    fn truncated_png_is_corrupt_data() {
        let png = encode_png(&ImageBuffer::solid(8, 8, [10, 20, 30]));
        let err = decode_image(&png[..png.len() / 2]).unwrap_err();
        assert!(matches!(err, ImagingError::CorruptData(_)), "{err:?}");
    }

    #[test]
    fn garbage_bytes_are_unsupported() {
        let err = decode_image(b"definitely not an image").unwrap_err();
        assert!(matches!(err, ImagingError::UnsupportedFormat));
    }

    #[test]
    fn hsv_pure_red() {
        let hsv = to_hsv([255, 0, 0]);
        assert_eq!(hsv.hue, 0.0);
        assert_eq!(hsv.saturation, 1.0);
        assert_eq!(hsv.value, 1.0);
    }

    #[test]
    fn hsv_mid_gray() {
        let hsv = to_hsv([128, 128, 128]);
        assert_eq!(hsv.hue, 0.0);
        assert_eq!(hsv.saturation, 0.0);
        assert!((hsv.value - 128.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn hsv_pure_blue_by_hexcone_formula() {
        // max = B, hue = 60 * ((R - G)/delta + 4) = 240
        let hsv = to_hsv([0, 0, 255]);
        assert!((hsv.hue - 240.0).abs() < 1e-12);
        assert_eq!(hsv.saturation, 1.0);
        assert_eq!(hsv.value, 1.0);
    }

    #[test]
    fn luminance_extremes_and_red() {
        assert_eq!(luminance([255, 255, 255]), 1.0);
        assert_eq!(luminance([0, 0, 0]), 0.0);
        assert!((luminance([255, 0, 0]) - 0.299).abs() < 1e-12);
    }

    #[test]
    fn region_window_clamps_inside_image() {
        let r = Region::window(0.0, 0.0, 15, 10, 10);
        assert_eq!((r.x0, r.y0), (0, 0));
        assert!(r.x1 <= 10 && r.y1 <= 10);
        assert!(r.area() > 0);
    }

    proptest! {
        #[test]
        fn hsv_round_trip_within_one_step(r in 0u8..=255, g in 0u8..=255, b in 0u8..=255) {
            let back = from_hsv(to_hsv([r, g, b]));
            prop_assert!((back[0] as i32 - r as i32).abs() <= 1);
            prop_assert!((back[1] as i32 - g as i32).abs() <= 1);
            prop_assert!((back[2] as i32 - b as i32).abs() <= 1);
        }

        #[test]
        fn luminance_is_bounded_and_monotone(r in 0u8..255, g in 0u8..255, b in 0u8..255) {
            let l = luminance([r, g, b]);
            prop_assert!((0.0..=1.0).contains(&l));
            prop_assert!(luminance([r + 1, g, b]) > l);
            prop_assert!(luminance([r, g + 1, b]) > l);
            prop_assert!(luminance([r, g, b + 1]) > l);
        }

        #[test]
        fn region_clamp_never_empty_when_overlapping(
            x0 in 0u32..50, y0 in 0u32..50, w in 1u32..60, h in 1u32..60,
        ) {
            let r = Region::new(x0, y0, x0 + w, y0 + h).clamped(50, 50);
            prop_assert!(r.x0 < r.x1 && r.y0 < r.y1);
            prop_assert!(r.x1 <= 50 && r.y1 <= 50);
        }
    }
}
