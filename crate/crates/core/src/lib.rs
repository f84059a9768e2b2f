//! Emoji prediction engine: a compact hashed n-gram classifier with int8
//! weight quantization, tag-driven synthetic augmentation for rare classes,
//! and a favorites reranker that blends model probabilities with each
//! user's insertion history.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision models are trained and served in.

pub mod augmentation;
pub mod classifier;
pub mod corpus;
pub mod evaluation;
pub mod featurizer;
pub mod lexicon;
pub mod personalization;
pub mod scalar;

pub use scalar::Scalar;

/// Served model precision.
pub type Model = classifier::ClassifierModel<f32>;
/// Model output at serving precision.
pub type ModelPrediction = classifier::Prediction<f32>;
/// Reranked output; reranking runs in `f64`.
pub type Reranked = personalization::RerankedPrediction<f64>;
