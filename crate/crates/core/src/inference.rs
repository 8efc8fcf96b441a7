//! Whole-utterance prediction, buffered sliding-window prediction for long
//! lines, and cross-attention export.

use std::fmt::Write as _;
use std::io::Write as _;
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::batch::{encode_asr, encode_text};
use crate::model::{AttentionMap, DiacriticModel};
use crate::scalar::Scalar;
use crate::text::{is_arabic_letter, is_diacritic, DiacriticLabel, LabeledText, TextError, LABEL_COUNT};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("input of {len} characters exceeds the model maximum of {max}")]
    TooLong { len: usize, max: usize },
    #[error("multimodal model needs an ASR hypothesis")]
    MissingAsrInput,
    #[error("model has no cross-attention to export")]
    NotMultimodal,
    #[error("invalid inference config: {0}")]
    Config(String),
    #[error("input is not undiacritized text: {0}")]
    InvalidRaw(#[from] TextError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sizes for sliding-window prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    /// Characters committed per step.
    pub window: usize,
    /// Context characters on each side of the window.
    pub buffer: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { window: 50, buffer: 25 }
    }
}

impl InferenceConfig {
    pub fn validate(&self, max_len_text: usize) -> Result<(), InferenceError> {
        if self.window == 0 {
            return Err(InferenceError::Config("window must be at least 1".into()));
        }
        if self.window + 2 * self.buffer > max_len_text {
            return Err(InferenceError::Config(format!(
                "window {} + 2 x buffer {} exceeds max_len_text {max_len_text}",
                self.window, self.buffer
            )));
        }
        Ok(())
    }
}

/// One step of the sliding window over a line of `len` characters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowStep {
    /// Characters fed to the model, `[safe_start, end_c)`.
    pub chunk: Range<usize>,
    /// Positions whose labels this step commits, `[start, end_p)`.
    pub commit: Range<usize>,
    /// Slice of the ASR hypothesis fed with the chunk.
    pub asr: Range<usize>,
}

/// The steps of the sliding window for a line of `len` characters and an ASR
/// hypothesis of `len_asr` characters. ASR slices use `r = len_asr / len`
/// with floor / ceil endpoints, computed in integers.
pub fn window_steps(len: usize, len_asr: usize, cfg: &InferenceConfig) -> Vec<WindowStep> {
    assert!(cfg.window >= 1, "window must be at least 1");
    let mut steps = Vec::new();
    let mut start = 0;
    while start < len {
        let safe_start = start.saturating_sub(cfg.buffer);
        let end_c = (start + cfg.window + cfg.buffer).min(len);
        let end_p = (start + cfg.window).min(len);
        let a0 = safe_start * len_asr / len;
        let a1 = ((end_c * len_asr).div_ceil(len)).min(len_asr);
        steps.push(WindowStep { chunk: safe_start..end_c, commit: start..end_p, asr: a0..a1 });
        start = end_p;
    }
    steps
}

/// Runs the sliding window with an arbitrary chunk predictor. `predict`
/// receives the step and must return one item per chunk character; the
/// committed part of each result is concatenated in position order.
pub fn sliding_window_with<L, E, F>(len: usize, len_asr: usize, cfg: &InferenceConfig, predict: F) -> Result<Vec<L>, E>
where
    L: Clone + Send,
    E: Send,
    F: Fn(&WindowStep) -> Result<Vec<L>, E> + Sync,
{
    let steps = window_steps(len, len_asr, cfg);
    let results: Vec<Vec<L>> = steps.par_iter().map(&predict).collect::<Result<_, E>>()?;
    let mut out = Vec::with_capacity(len);
    for (step, result) in steps.iter().zip(results) {
        assert_eq!(result.len(), step.chunk.len(), "predictor must label every chunk character");
        let off = step.chunk.start;
        out.extend_from_slice(&result[step.commit.start - off..step.commit.end - off]);
    }
    Ok(out)
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Arg-max labels for one chunk; non-letters are forced to `NONE`.
fn predict_chunk<T: Scalar>(model: &DiacriticModel<T>, raw: &[char], asr: &[char]) -> Vec<DiacriticLabel> {
    let cfg = model.config();
    debug_assert!(raw.len() <= cfg.max_len_text);
    if raw.is_empty() {
        return Vec::new();
    }
    let (text_ids, _) = encode_text(model.vocab(), raw, cfg.max_len_text);
    let asr_ids = if cfg.multimodal {
        if asr.is_empty() {
            log::warn!("empty ASR hypothesis; substituting a single PAD token");
        }
        let (ids, cut) = encode_asr(model.vocab(), asr, cfg.max_len_asr);
        if cut {
            log::warn!("ASR hypothesis of {} characters truncated to {}", asr.len(), cfg.max_len_asr);
        }
        ids
    } else {
        Vec::new()
    };
    let (probs, _) = model.predict_ids(&text_ids, &asr_ids);
    probs
        .chunks_exact(LABEL_COUNT)
        .zip(raw)
        .map(|(p, &c)| {
            if is_arabic_letter(c) {
                DiacriticLabel::from_index(argmax(p)).expect("label index in range")
            } else {
                DiacriticLabel::None
            }
        })
        .collect()
}

fn prepare<T: Scalar>(
    model: &DiacriticModel<T>,
    raw: &str,
    asr: Option<&str>,
) -> Result<(Vec<char>, Vec<char>), InferenceError> {
    let raw: Vec<char> = raw.chars().collect();
    if let Some(i) = raw.iter().position(|&c| is_diacritic(c)) {
        return Err(TextError::DiacriticInBase(i).into());
    }
    let asr: Vec<char> = match (model.config().multimodal, asr) {
        (true, None) => return Err(InferenceError::MissingAsrInput),
        (true, Some(a)) => a.chars().collect(),
        (false, _) => Vec::new(),
    };
    Ok((raw, asr))
}

fn finish(raw: Vec<char>, labels: Vec<DiacriticLabel>) -> Result<LabeledText, InferenceError> {
    Ok(LabeledText::with_forced_labels(raw, labels)?)
}

/// Predicts labels for the whole line in one pass.
pub fn predict_direct<T: Scalar>(
    model: &DiacriticModel<T>,
    raw: &str,
    asr: Option<&str>,
) -> Result<LabeledText, InferenceError> {
    let (raw, asr) = prepare(model, raw, asr)?;
    let max = model.config().max_len_text;
    if raw.len() > max {
        return Err(InferenceError::TooLong { len: raw.len(), max });
    }
    let labels = predict_chunk(model, &raw, &asr);
    finish(raw, labels)
}

/// Predicts on the first `max_len_text` characters only (with the
/// proportional share of the ASR hypothesis) and labels the rest `NONE`.
/// This is what a model without windowing does on long lines.
pub fn predict_truncated<T: Scalar>(
    model: &DiacriticModel<T>,
    raw: &str,
    asr: Option<&str>,
) -> Result<LabeledText, InferenceError> {
    let (raw, asr) = prepare(model, raw, asr)?;
    let n = raw.len().min(model.config().max_len_text);
    let mut labels = if raw.is_empty() {
        Vec::new()
    } else {
        let a1 = (n * asr.len()).div_ceil(raw.len()).min(asr.len());
        predict_chunk(model, &raw[..n], &asr[..a1])
    };
    labels.resize(raw.len(), DiacriticLabel::None);
    finish(raw, labels)
}

/// Predicts arbitrarily long lines with buffered windows; only the central
/// window of each chunk is committed.
pub fn sliding_window_predict<T: Scalar>(
    model: &DiacriticModel<T>,
    raw: &str,
    asr: Option<&str>,
    cfg: &InferenceConfig,
) -> Result<LabeledText, InferenceError> {
    cfg.validate(model.config().max_len_text)?;
    let (raw, asr) = prepare(model, raw, asr)?;
    let labels = sliding_window_with(raw.len(), asr.len(), cfg, |step| {
        Ok::<_, InferenceError>(predict_chunk(model, &raw[step.chunk.clone()], &asr[step.asr.clone()]))
    })?;
    finish(raw, labels)
}

/// Cross-attention weights for one line, cropped to the true lengths.
pub fn attention_map<T: Scalar>(model: &DiacriticModel<T>, raw: &str, asr: &str) -> Result<AttentionMap, InferenceError> {
    let cfg = model.config();
    if !cfg.multimodal {
        return Err(InferenceError::NotMultimodal);
    }
    let (raw, asr) = prepare(model, raw, Some(asr))?;
    if raw.len() > cfg.max_len_text {
        return Err(InferenceError::TooLong { len: raw.len(), max: cfg.max_len_text });
    }
    if asr.len() > cfg.max_len_asr {
        return Err(InferenceError::TooLong { len: asr.len(), max: cfg.max_len_asr });
    }
    let (text_ids, _) = encode_text(model.vocab(), &raw, cfg.max_len_text);
    let (asr_ids, _) = encode_asr(model.vocab(), &asr, cfg.max_len_asr);
    let (_, weights) = model.predict_ids(&text_ids, &asr_ids);
    let weights = weights.expect("multimodal model returns attention");
    Ok(AttentionMap {
        heads: cfg.n_heads,
        lq: text_ids.len(),
        lk: asr_ids.len(),
        weights: weights.iter().map(|w| w.as_f64()).collect(),
    })
}

fn annotate(c: char) -> String {
    if c.is_whitespace() || c.is_control() {
        format!("U+{:04X}", c as u32)
    } else {
        c.to_string()
    }
}

/// Renders an attention map as plain text: a header with the head count,
/// lengths and the characters along each axis, then one block of `lq` rows
/// per head.
pub fn format_attention(map: &AttentionMap, query: &[char], key: &[char]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "n_heads {}", map.heads);
    let _ = writeln!(s, "lq {}", map.lq);
    let _ = writeln!(s, "lk {}", map.lk);
    let q: Vec<String> = query.iter().map(|&c| annotate(c)).collect();
    let k: Vec<String> = key.iter().map(|&c| annotate(c)).collect();
    let _ = writeln!(s, "query {}", q.join(" "));
    let _ = writeln!(s, "key {}", k.join(" "));
    for h in 0..map.heads {
        let _ = writeln!(s, "head {h}");
        for r in 0..map.lq {
            let row: Vec<String> = map.row(h, r).iter().map(|w| format!("{w:.5e}")).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
    }
    s
}

/// Writes the cross-attention of one line to `path` and returns the map.
/// An empty hypothesis is exported as its single PAD key, shown as `<pad>`.
pub fn export_attention<T: Scalar>(
    model: &DiacriticModel<T>,
    raw: &str,
    asr: &str,
    path: &Path,
) -> Result<AttentionMap, InferenceError> {
    let map = attention_map(model, raw, asr)?;
    let query: Vec<char> = raw.chars().collect();
    let key: Vec<char> = asr.chars().collect();
    let mut text = format_attention(&map, &query, &key);
    if key.is_empty() {
        text = text.replacen("key \n", "key <pad>\n", 1);
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(map)
}
