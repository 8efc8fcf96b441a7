use super::config::ModelConfig;
use super::vocab::{Vocabulary, PAD};
use super::ModelError;
use crate::text::{strip_diacritics, LabeledText};

/// One training / evaluation utterance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub raw: String,
    /// Provisional diacritized hypothesis; empty when unavailable.
    pub asr: String,
    pub gold: String,
}

/// Right-padded id matrices for `batch` rows. All `B x L` matrices are
/// row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedBatch {
    pub batch: usize,
    pub text_len: usize,
    pub asr_len: usize,
    pub text_ids: Vec<u32>,
    pub text_mask: Vec<bool>,
    pub asr_ids: Vec<u32>,
    pub asr_mask: Vec<bool>,
    pub label_ids: Vec<u32>,
    pub loss_mask: Vec<bool>,
    /// Rows whose text or ASR side was cut to the configured maximum.
    pub truncated: usize,
}

impl EncodedBatch {
    /// True (unpadded) text length of row `b`.
    pub fn text_length(&self, b: usize) -> usize {
        self.text_mask[b * self.text_len..(b + 1) * self.text_len].iter().filter(|&&m| m).count()
    }

    pub fn asr_length(&self, b: usize) -> usize {
        self.asr_mask[b * self.asr_len..(b + 1) * self.asr_len].iter().filter(|&&m| m).count()
    }

    pub fn text_row(&self, b: usize) -> &[u32] {
        &self.text_ids[b * self.text_len..b * self.text_len + self.text_length(b)]
    }

    pub fn asr_row(&self, b: usize) -> &[u32] {
        &self.asr_ids[b * self.asr_len..b * self.asr_len + self.asr_length(b)]
    }

    pub fn label_row(&self, b: usize) -> &[u32] {
        &self.label_ids[b * self.text_len..b * self.text_len + self.text_length(b)]
    }

    pub fn loss_mask_row(&self, b: usize) -> &[bool] {
        &self.loss_mask[b * self.text_len..b * self.text_len + self.text_length(b)]
    }
}

/// Id-level sequences of one example before padding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct EncodedRow {
    pub text: Vec<u32>,
    pub asr: Vec<u32>,
    pub labels: Vec<u32>,
    pub truncated: bool,
}

pub(crate) fn encode_text(vocab: &Vocabulary, raw: &[char], max: usize) -> (Vec<u32>, bool) {
    let n = raw.len().min(max);
    (vocab.text.encode(&raw[..n]), raw.len() > max)
}

/// ASR ids; an empty hypothesis becomes a single PAD token so the
/// cross-attention always has a key.
pub(crate) fn encode_asr(vocab: &Vocabulary, asr: &[char], max: usize) -> (Vec<u32>, bool) {
    if asr.is_empty() {
        return (vec![PAD], false);
    }
    let n = asr.len().min(max);
    (vocab.asr.encode(&asr[..n]), asr.len() > max)
}

pub(crate) fn encode_row(
    ex: &Example,
    index: usize,
    vocab: &Vocabulary,
    cfg: &ModelConfig,
) -> Result<EncodedRow, ModelError> {
    let gold: LabeledText =
        strip_diacritics(&ex.gold).map_err(|e| ModelError::InvalidGold { index, source: e })?;
    let raw: Vec<char> = ex.raw.chars().collect();
    if raw.len() != gold.len() {
        return Err(ModelError::LengthMismatch { index, raw: raw.len(), labels: gold.len() });
    }
    if raw.as_slice() != gold.base() {
        return Err(ModelError::RawGoldMismatch { index });
    }
    let (text, t_trunc) = encode_text(vocab, &raw, cfg.max_len_text);
    let labels = gold.labels()[..text.len()].iter().map(|l| l.index() as u32).collect();
    let (asr, a_trunc) = if cfg.multimodal {
        let chars: Vec<char> = ex.asr.chars().collect();
        encode_asr(vocab, &chars, cfg.max_len_asr)
    } else {
        (vec![PAD], false)
    };
    Ok(EncodedRow { text, asr, labels, truncated: t_trunc || a_trunc })
}

pub(crate) fn pad_rows(rows: &[&EncodedRow]) -> EncodedBatch {
    let batch = rows.len();
    let text_len = rows.iter().map(|r| r.text.len()).max().unwrap_or(0);
    let asr_len = rows.iter().map(|r| r.asr.len()).max().unwrap_or(0);
    let mut out = EncodedBatch {
        batch,
        text_len,
        asr_len,
        text_ids: vec![PAD; batch * text_len],
        text_mask: vec![false; batch * text_len],
        asr_ids: vec![PAD; batch * asr_len],
        asr_mask: vec![false; batch * asr_len],
        label_ids: vec![0; batch * text_len],
        loss_mask: vec![false; batch * text_len],
        truncated: rows.iter().filter(|r| r.truncated).count(),
    };
    for (b, r) in rows.iter().enumerate() {
        let t = b * text_len;
        out.text_ids[t..t + r.text.len()].copy_from_slice(&r.text);
        out.label_ids[t..t + r.labels.len()].copy_from_slice(&r.labels);
        for i in 0..r.text.len() {
            out.text_mask[t + i] = true;
            out.loss_mask[t + i] = true;
        }
        let a = b * asr_len;
        out.asr_ids[a..a + r.asr.len()].copy_from_slice(&r.asr);
        for i in 0..r.asr.len() {
            out.asr_mask[a + i] = true;
        }
    }
    out
}

/// Encodes, truncates and right-pads `examples`.
pub fn encode_batch(
    examples: &[Example],
    vocab: &Vocabulary,
    cfg: &ModelConfig,
) -> Result<EncodedBatch, ModelError> {
    if examples.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let rows = examples
        .iter()
        .enumerate()
        .map(|(i, ex)| encode_row(ex, i, vocab, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&EncodedRow> = rows.iter().collect();
    let batch = pad_rows(&refs);
    if batch.truncated > 0 {
        log::warn!("{} of {} examples truncated to the configured maximum length", batch.truncated, batch.batch);
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::DiacriticLabel;

    fn ex(gold: &str) -> Example {
        let raw = strip_diacritics(gold).unwrap().base_string();
        Example { raw, asr: gold.to_string(), gold: gold.to_string() }
    }

    #[test]
    fn pads_and_masks() {
        let exs = vec![ex("كَتَبَ بَا"), ex("دُرْسٌ")];
        let vocab = Vocabulary::build(exs.iter().map(|e| (e.raw.as_str(), Some(e.asr.as_str())))).unwrap();
        let cfg = ModelConfig::default();
        let b = encode_batch(&exs, &vocab, &cfg).unwrap();
        assert_eq!(b.text_len, 6);
        assert_eq!(&b.text_mask[6..], &[true, true, true, false, false, false]);
        assert_eq!(b.text_ids[9], PAD);
        assert_eq!(b.label_ids[0], DiacriticLabel::Fatha.index() as u32);
        assert_eq!(b.label_ids[6 + 1], DiacriticLabel::Sukun.index() as u32);
        assert_eq!(b.label_ids[6 + 2], DiacriticLabel::Dammatan.index() as u32);
        assert_eq!(b.text_length(1), 3);
        assert_eq!(b.asr_length(1), 6);
        assert_eq!(b.truncated, 0);
    }

    #[test]
    fn truncates_long_rows() {
        let exs = vec![ex(&"بَ".repeat(30))];
        let vocab = Vocabulary::build([("ب", None)]).unwrap();
        let cfg = ModelConfig { max_len_text: 10, max_len_asr: 15, ..ModelConfig::default() };
        let b = encode_batch(&exs, &vocab, &cfg).unwrap();
        assert_eq!(b.text_len, 10);
        assert_eq!(b.asr_len, 15);
        assert_eq!(b.truncated, 1);
    }

    #[test]
    fn errors() {
        let vocab = Vocabulary::build([("ب", None)]).unwrap();
        let cfg = ModelConfig::default();
        assert!(matches!(encode_batch(&[], &vocab, &cfg), Err(ModelError::EmptyBatch)));
        let bad = Example { raw: "بب".into(), asr: String::new(), gold: "بَ".into() };
        assert!(matches!(encode_batch(&[bad], &vocab, &cfg), Err(ModelError::LengthMismatch { .. })));
        let bad = Example { raw: "ت".into(), asr: String::new(), gold: "بَ".into() };
        assert!(matches!(encode_batch(&[bad], &vocab, &cfg), Err(ModelError::RawGoldMismatch { .. })));
    }

    #[test]
    fn empty_asr_becomes_pad_key() {
        let vocab = Vocabulary::build([("ب", None)]).unwrap();
        let e = Example { raw: "ب".into(), asr: String::new(), gold: "بَ".into() };
        let b = encode_batch(&[e], &vocab, &ModelConfig::default()).unwrap();
        assert_eq!(b.asr_row(0), &[PAD]);
    }
}
