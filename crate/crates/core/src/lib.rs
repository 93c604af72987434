//! Predict the ambiance of commercial places from the profile pictures of
//! their visitors.
//!
//! The pipeline decodes each place's profile pictures, extracts 64 stylistic
//! features per picture (photographic quality, colors, emotions,
//! demographics via a pluggable face-annotation provider, and
//! self-presentation cues), aggregates every place into a 129-element vector
//! of feature means, standard deviations, and a face count, reduces 72 raw
//! ambiance ratings to 18 target dimensions by clustering, screens features
//! by rank correlation, and predicts each ambiance dimension with a
//! leave-one-out regression over the five best-correlated features.

pub mod aggregate;
pub mod annotation;
pub mod cluster;
pub mod features;
pub mod imaging;
pub mod manifest;
pub mod pipeline;
pub mod predict;
pub mod ratings;
pub mod registry;
pub mod remote;
pub mod report;
pub mod stats;
pub mod synth;

pub use aggregate::{aggregate_place, extract_picture, PlaceProfile};
pub use annotation::{annotate, stub_annotate, AnnotationSource, FaceAnnotation};
pub use imaging::{decode_image, ImageBuffer};
pub use registry::{FeatureRegistry, PictureFeatures};
