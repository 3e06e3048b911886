//! Dataset-engineering toolkit for images annotated in a joint affective
//! (discrete emotion + valence/arousal/dominance) and perceptual (color,
//! structure, complexity) space.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`schema`] - the annotation record, its JSON layout and corpus pairing.
//! * [`perceptual`] - color, HSV, edge, curvature and complexity descriptors.
//! * [`curation`] - sharpness scoring, threshold filtering and de-duplication.
//! * [`affect`] - per-model aggregation, emotion resolution, density maps.
//! * [`interplay`] - correlations and color composition across emotions.
//! * [`loss`] - modulation-vector loss kernels with analytic gradients, and
//!   evaluation metrics.
//! * [`review`] - the human review queue, audit log and agreement statistics.
//! * [`synth`] - seeded synthetic images and records for fixtures and tests.

pub mod affect;
pub mod circular;
pub mod config;
pub mod curation;
pub mod interplay;
pub mod loss;
pub mod perceptual;
pub mod review;
pub mod schema;
pub mod synth;

pub use schema::{
    AnnotationRecord, ColorName, ColorProportion, EmotionLabel, HsvSummary, ModelVad,
    StructuralFeatures, VadVector,
};
