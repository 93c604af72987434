//! HTTP client for a Face++-style annotation service: multipart image
//! upload, JSON response, bounded concurrency, and retry with exponential
//! backoff on 5xx.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Deserialize;

use crate::annotation::{AnnotationError, FaceAnnotation, Glasses, Landmarks, Point, RaceProbs, Sex, SexGuess};
use crate::imaging::{encode_png, ImageBuffer, Region};

/// Environment variables the CLI reads remote credentials from.
pub const ENDPOINT_ENV: &str = "AMBIANCE_ANNOTATION_ENDPOINT";
pub const API_KEY_ENV: &str = "AMBIANCE_ANNOTATION_API_KEY";

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_in_flight: usize,
    pub max_retries: u32,
    /// Base delay for exponential backoff; doubles per retry.
    pub backoff: Duration,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: None,
            timeout: Duration::from_secs(20),
            max_in_flight: 4,
            max_retries: 3,
            backoff: Duration::from_millis(250),
        }
    }

    pub fn from_env() -> Result<Self, AnnotationError> {
        let endpoint = std::env::var(ENDPOINT_ENV).map_err(|_| {
            AnnotationError::ProviderUnavailable(format!("{ENDPOINT_ENV} is not set"))
        })?;
        let mut config = Self::new(endpoint);
        config.api_key = std::env::var(API_KEY_ENV).ok();
        Ok(config)
    }
}

/// Counting semaphore capping concurrent in-flight requests.
struct Gate {
    permits: Mutex<usize>,
    available: Condvar,
}

static GATE: std::sync::OnceLock<Gate> = std::sync::OnceLock::new();

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self, cap: usize) -> Permit<'_> {
        let mut used = self.permits.lock().unwrap();
        while *used >= cap {
            used = self.available.wait(used).unwrap();
        }
        *used += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() -= 1;
        self.0.available.notify_one();
    }
}

/// Response shape of the annotation service: zero or more candidate faces;
/// the highest-confidence one wins. Field layout mirrors the classic
/// detect-API style: geometry at the face level, everything else under
/// `attributes`.
#[derive(Debug, Deserialize)]
struct WireResponse {
    faces: Vec<WireFace>,
}

#[derive(Debug, Deserialize)]
struct WireFace {
    #[serde(default)]
    confidence: f64,
    bbox: WireBox,
    landmarks: WireLandmarks,
    #[serde(default)]
    attributes: WireAttributes,
}

#[derive(Debug, Deserialize)]
struct WireBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

#[derive(Debug, Deserialize)]
struct WireLandmarks {
    left_eye: [f64; 2],
    right_eye: [f64; 2],
    nose: [f64; 2],
    mouth: [f64; 2],
}

#[derive(Debug, Default, Deserialize)]
struct WireAttributes {
    smile: Option<f64>,
    age: Option<f64>,
    sex: Option<WireSex>,
    race: Option<RaceProbs>,
    glasses: Option<String>,
    tilt_deg: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct WireSex {
    label: String,
    #[serde(default = "default_confidence")]
    confidence: f64,
}

fn default_confidence() -> f64 {
    1.0
}

pub fn annotate_remote(
    image: &ImageBuffer,
    config: &RemoteConfig,
) -> Result<FaceAnnotation, AnnotationError> {
    let gate = GATE.get_or_init(|| Gate {
        permits: Mutex::new(0),
        available: Condvar::new(),
    });
    let _permit = gate.acquire(config.max_in_flight.max(1));

    let client = reqwest::blocking::Client::builder()
        .timeout(config.timeout)
        .build()
        .map_err(|e| AnnotationError::ProviderUnavailable(e.to_string()))?;
    let png = encode_png(image);

    let mut attempt = 0u32;
    loop {
        let mut form = reqwest::blocking::multipart::Form::new().part(
            "image",
            reqwest::blocking::multipart::Part::bytes(png.clone())
                .file_name("picture.png")
                .mime_str("image/png")
                .expect("static mime"),
        );
        if let Some(key) = &config.api_key {
            form = form.text("api_key", key.clone());
        }
        let response = client.post(&config.endpoint).multipart(form).send();
        match response {
            Ok(resp) if resp.status().is_server_error() && attempt < config.max_retries => {
                attempt += 1;
                std::thread::sleep(config.backoff * 2u32.pow(attempt - 1));
            }
            Ok(resp) if resp.status().is_success() => {
                let body = resp
                    .text()
                    .map_err(|e| AnnotationError::ProviderUnavailable(e.to_string()))?;
                return parse_wire_response(&body, image.width(), image.height());
            }
            Ok(resp) => {
                return Err(AnnotationError::ProviderUnavailable(format!(
                    "annotation service returned {}",
                    resp.status()
                )));
            }
            Err(e) => {
                return Err(AnnotationError::ProviderUnavailable(e.to_string()));
            }
        }
    }
}

fn parse_wire_response(
    body: &str,
    width: u32,
    height: u32,
) -> Result<FaceAnnotation, AnnotationError> {
    let wire: WireResponse = serde_json::from_str(body)
        .map_err(|e| AnnotationError::MalformedResponse(e.to_string()))?;
    let best = wire
        .faces
        .into_iter()
        .max_by(|a, b| a.confidence.total_cmp(&b.confidence));
    let Some(face) = best else {
        return Ok(FaceAnnotation::undetected());
    };
    if !(face.bbox.w > 0.0 && face.bbox.h > 0.0) {
        return Err(AnnotationError::MalformedResponse("empty bbox".into()));
    }
    let x0 = face.bbox.x.max(0.0) as u32;
    let y0 = face.bbox.y.max(0.0) as u32;
    let bbox = Region::new(
        x0,
        y0,
        (face.bbox.x + face.bbox.w).ceil().max(1.0) as u32,
        (face.bbox.y + face.bbox.h).ceil().max(1.0) as u32,
    )
    .clamped(width, height);
    let point = |xy: [f64; 2]| Point { x: xy[0], y: xy[1] };
    let sex = match face.attributes.sex {
        Some(s) => Some(SexGuess {
            sex: match s.label.to_ascii_lowercase().as_str() {
                "male" => Sex::Male,
                "female" => Sex::Female,
                other => {
                    return Err(AnnotationError::MalformedResponse(format!(
                        "unknown sex label {other:?}"
                    )))
                }
            },
            confidence: s.confidence,
        }),
        None => None,
    };
    let glasses = match face.attributes.glasses.as_deref() {
        None => None,
        Some("none") => Some(Glasses::None),
        Some("reading") => Some(Glasses::Reading),
        Some("sunglasses") => Some(Glasses::Sunglasses),
        Some(other) => {
            return Err(AnnotationError::MalformedResponse(format!(
                "unknown glasses label {other:?}"
            )))
        }
    };
    let annotation = FaceAnnotation {
        detected: true,
        bbox: Some(bbox),
        landmarks: Some(Landmarks {
            left_eye: point(face.landmarks.left_eye),
            right_eye: point(face.landmarks.right_eye),
            nose: point(face.landmarks.nose),
            mouth: point(face.landmarks.mouth),
        }),
        smile: face.attributes.smile,
        age: face.attributes.age,
        sex,
        race: face.attributes.race,
        glasses,
        tilt_deg: face.attributes.tilt_deg,
    };
    annotation.validate()?;
    Ok(annotation)
}
