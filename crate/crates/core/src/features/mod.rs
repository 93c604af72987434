//! Per-picture feature extractors, split into face-independent stylistic
//! metrics and face-dependent ones.

pub mod eigenfaces;
pub mod face;
pub mod visual;

pub use eigenfaces::{classify_emotion, train_eigenfaces, EigenfacesModel};
pub use face::{extract_face, self_presentation, uniqueness, CorpusStats, FaceFeatures};
pub use visual::{extract_visual, VisualFeatures};
