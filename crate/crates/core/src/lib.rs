//! Arabic diacritic restoration from undiacritized text fused with a
//! provisional diacritized ASR hypothesis.
//!
//! The network math is generic over [`Scalar`]; [`Model`] (f32) is used for
//! training and checkpoints, [`Model64`] for gradient checking.

pub mod asr_sim;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod seeding;
pub mod tensor;
pub mod text;

pub use scalar::Scalar;

pub type Model = model::DiacriticModel<f32>;
pub type Model64 = model::DiacriticModel<f64>;
