use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    Transformer,
    #[default]
    Lstm,
}

/// Architecture hyperparameters. The defaults are the published setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub backbone: Backbone,
    pub d_model: usize,
    pub n_heads: usize,
    /// Transformer blocks per encoder.
    pub n_blocks: usize,
    pub ff_dim: usize,
    pub dropout_transformer: f64,
    pub dropout_lstm: f64,
    pub lstm_layers: usize,
    /// ReLU dense layers on top of each encoder.
    pub dense_layers: usize,
    /// Concatenate the text encoding to the cross-attention output.
    pub fuse_concat: bool,
    pub max_len_text: usize,
    pub max_len_asr: usize,
    /// `false` is the Text-Only model.
    pub multimodal: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone: Backbone::Lstm,
            d_model: 128,
            n_heads: 4,
            n_blocks: 2,
            ff_dim: 128,
            dropout_transformer: 0.2,
            dropout_lstm: 0.5,
            lstm_layers: 2,
            dense_layers: 2,
            fuse_concat: true,
            max_len_text: 200,
            max_len_asr: 400,
            multimodal: true,
        }
    }
}

impl ModelConfig {
    pub fn text_only() -> Self {
        Self { multimodal: false, ..Self::default() }
    }

    pub fn dropout(&self) -> f64 {
        match self.backbone {
            Backbone::Transformer => self.dropout_transformer,
            Backbone::Lstm => self.dropout_lstm,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("ff_dim", self.ff_dim),
            ("max_len_text", self.max_len_text),
            ("max_len_asr", self.max_len_asr),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be at least 1")));
            }
        }
        match self.backbone {
            Backbone::Transformer if self.n_blocks == 0 => {
                return Err(ModelError::Config("n_blocks must be at least 1".into()))
            }
            Backbone::Lstm if self.lstm_layers == 0 => {
                return Err(ModelError::Config("lstm_layers must be at least 1".into()))
            }
            _ => {}
        }
        if self.d_model % self.n_heads != 0 {
            return Err(ModelError::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        for p in [self.dropout_transformer, self.dropout_lstm] {
            if !(0.0..1.0).contains(&p) {
                return Err(ModelError::Config(format!("dropout {p} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Optimisation loop settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Examples per gradient shard; shards run in parallel and are summed in
    /// a fixed order.
    pub shard_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-7,
            seed: 0,
            shard_size: 8,
        }
    }
}
