//! The learnable core: vocabulary, batching, encoders, fusion, loss,
//! optimisation, gradient checking and checkpoints.

pub mod attention;
pub mod batch;
pub mod checkpoint;
pub mod config;
pub mod encoder;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod lstm;
pub mod network;
pub mod optim;
pub mod params;
pub mod train;
pub mod vocab;

pub use batch::{encode_batch, EncodedBatch, Example};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use config::{Backbone, ModelConfig, TrainConfig};
pub use gradcheck::{grad_check, GradCheckReport};
pub use loss::loss;
pub use network::{AttentionMap, DiacriticModel, ForwardOutput, Mode};
pub use optim::Adam;
pub use params::ParamSpec;
pub use train::{train, EpochRecord, TrainHistory};
pub use vocab::{Vocabulary, PAD, UNK};

use crate::text::TextError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("example {index}: raw text has {raw} characters but gold has {labels} labels")]
    LengthMismatch { index: usize, raw: usize, labels: usize },
    #[error("example {index}: raw text differs from the stripped gold text")]
    RawGoldMismatch { index: usize },
    #[error("example {index}: invalid gold text: {source}")]
    InvalidGold { index: usize, source: TextError },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("no position is counted in the loss")]
    AllMasked,
    #[error("checkpoint format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),
    #[error("checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
