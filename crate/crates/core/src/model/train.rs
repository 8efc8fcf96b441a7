//! Minibatch Adam training with per-epoch dev scoring and best-epoch
//! selection.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::batch::{encode_row, pad_rows, EncodedRow, Example};
use super::config::{ModelConfig, TrainConfig};
use super::network::{DiacriticModel, Mode};
use super::optim::Adam;
use super::vocab::Vocabulary;
use super::ModelError;
use crate::inference::{sliding_window_predict, InferenceConfig};
use crate::metrics::{der, DerReport};
use crate::scalar::Scalar;
use crate::seeding::{derive_seed, rng_for};
use crate::text::strip_diacritics;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean cross-entropy per counted position over the epoch.
    pub train_loss: f64,
    pub dev_der: DerReport,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (lowest dev DER, earliest on ties).
    pub best_epoch: usize,
}

/// Window settings used to score dev lines of any length.
pub fn dev_inference_config(max_len_text: usize) -> InferenceConfig {
    let default = InferenceConfig::default();
    if default.validate(max_len_text).is_ok() {
        default
    } else {
        InferenceConfig { window: (max_len_text / 2).max(1), buffer: max_len_text / 4 }
    }
}

/// Pooled DER of `model` on `examples`, predicting with the sliding window.
pub fn evaluate_der<T: Scalar>(model: &DiacriticModel<T>, examples: &[Example]) -> Result<DerReport, ModelError> {
    let icfg = dev_inference_config(model.config().max_len_text);
    let mut report = DerReport::default();
    for (index, ex) in examples.iter().enumerate() {
        let gold = strip_diacritics(&ex.gold).map_err(|source| ModelError::InvalidGold { index, source })?;
        let asr = model.config().multimodal.then_some(ex.asr.as_str());
        let pred = sliding_window_predict(model, &ex.raw, asr, &icfg)
            .map_err(|e| ModelError::Shape(format!("dev example {index}: {e}")))?;
        report += der(&pred, &gold).map_err(|_| ModelError::RawGoldMismatch { index })?;
    }
    Ok(report)
}

fn dev_score(r: &DerReport) -> f64 {
    r.incl_nodiac_with_ce.rate().unwrap_or(f64::INFINITY)
}

/// Trains a fresh model on `train_set` and returns the parameters of the
/// epoch with the lowest dev DER. Deterministic given `train_cfg.seed`.
pub fn train<T: Scalar>(
    train_set: &[Example],
    dev_set: &[Example],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<(DiacriticModel<T>, TrainHistory), ModelError> {
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    if train_cfg.epochs == 0 || train_cfg.batch_size == 0 {
        return Err(ModelError::Config("epochs and batch_size must be at least 1".into()));
    }
    let vocab = Vocabulary::build(
        train_set.iter().map(|e| (e.raw.as_str(), model_cfg.multimodal.then_some(e.asr.as_str()))),
    )?;
    let mut model = DiacriticModel::<T>::new(model_cfg.clone(), vocab, train_cfg.seed)?;
    let rows: Vec<EncodedRow> = train_set
        .iter()
        .enumerate()
        .map(|(i, ex)| encode_row(ex, i, model.vocab(), model_cfg))
        .collect::<Result<_, _>>()?;
    let truncated = rows.iter().filter(|r| r.truncated).count();
    if truncated > 0 {
        log::warn!("{truncated} training examples truncated to the configured maximum length");
    }

    let mut adam = Adam::<T>::new(model.num_parameters(), train_cfg);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, Vec<T>)> = None;
    let mut order: Vec<usize> = (0..rows.len()).collect();
    for epoch in 1..=train_cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng_for(train_cfg.seed, &[1, epoch as u64]));
        let mut loss_sum = 0.0;
        let mut counted = 0usize;
        for (step, idx) in order.chunks(train_cfg.batch_size).enumerate() {
            let refs: Vec<&EncodedRow> = idx.iter().map(|&i| &rows[i]).collect();
            let batch = pad_rows(&refs);
            let seed = derive_seed(train_cfg.seed, &[2, epoch as u64, step as u64]);
            let (loss, grads) = model.loss_and_gradient(&batch, Mode::Train { seed }, train_cfg.shard_size)?;
            let n = batch.loss_mask.iter().filter(|&&m| m).count();
            loss_sum += loss.as_f64() * n as f64;
            counted += n;
            adam.update(model.params_mut(), &grads);
        }
        let dev_der = evaluate_der(&model, dev_set)?;
        let record = EpochRecord { epoch, train_loss: loss_sum / counted.max(1) as f64, dev_der };
        log::info!(
            "epoch {epoch}: train loss {:.4}, dev DER {:.2}%",
            record.train_loss,
            100.0 * dev_score(&record.dev_der)
        );
        let score = dev_score(&record.dev_der);
        if best.as_ref().map_or(true, |(b, _)| score < *b) {
            best = Some((score, model.params().to_vec()));
            history.best_epoch = epoch;
        }
        history.epochs.push(record);
    }
    if let Some((_, params)) = best {
        model.params_mut().copy_from_slice(&params);
    }
    Ok((model, history))
}
