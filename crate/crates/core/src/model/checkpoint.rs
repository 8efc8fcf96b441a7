//! Versioned binary checkpoints.
//!
//! Layout: `DIACKPT\0`, `u32` format version, `u64` header length, a JSON
//! header (config, vocabulary, vocabulary hash, parameter specs, history),
//! then one block per parameter: `u32` name length, name bytes, `u32` rank,
//! `u64` dims, little-endian `f32` values. All integers are little-endian.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::network::DiacriticModel;
use super::params::ParamSpec;
use super::train::TrainHistory;
use super::vocab::Vocabulary;
use super::ModelError;
use crate::scalar::Scalar;
use crate::text::LABEL_COUNT;

pub const MAGIC: &[u8; 8] = b"DIACKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vocabulary,
    vocab_hash: String,
    params: Vec<ParamSpec>,
    history: Option<TrainHistory>,
}

/// Decoded checkpoint contents.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: DiacriticModel<f32>,
    pub history: Option<TrainHistory>,
}

/// Serializes `model` (as `f32`) and optional history.
pub fn checkpoint_bytes<T: Scalar>(model: &DiacriticModel<T>, history: Option<&TrainHistory>) -> Vec<u8> {
    let header = Header {
        config: model.config().clone(),
        vocab: model.vocab().clone(),
        vocab_hash: model.vocab().hash(),
        params: model.named_parameters().map(|(s, _)| s.clone()).collect(),
        history: history.cloned(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(json.len() + 4 * model.num_parameters() + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (spec, values) in model.named_parameters() {
        out.extend_from_slice(&(spec.name.len() as u32).to_le_bytes());
        out.extend_from_slice(spec.name.as_bytes());
        out.extend_from_slice(&(spec.shape.len() as u32).to_le_bytes());
        for &d in &spec.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in values {
            out.extend_from_slice(&v.to_f32_le());
        }
    }
    out
}

pub fn save_checkpoint<T: Scalar>(
    model: &DiacriticModel<T>,
    history: Option<&TrainHistory>,
    path: &Path,
) -> Result<(), ModelError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&checkpoint_bytes(model, history))?;
    f.sync_all()?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| ModelError::CorruptFile("unexpected end of file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize, ModelError> {
        usize::try_from(self.u64()?).map_err(|_| ModelError::CorruptFile("length overflow".into()))
    }
}

/// Parses checkpoint bytes. Checks run in order: magic, version, label
/// count, vocabulary hash, parameter shapes against the architecture the
/// config describes, then the parameter blocks themselves.
pub fn parse_checkpoint(bytes: &[u8]) -> Result<Checkpoint, ModelError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(MAGIC.as_slice()) {
        return Err(ModelError::CorruptFile("not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
    }
    let header_len = r.len()?;
    let header: Header = serde_json::from_slice(r.take(header_len)?)
        .map_err(|e| ModelError::CorruptFile(format!("header: {e}")))?;
    if header.vocab.label_count != LABEL_COUNT {
        return Err(ModelError::ShapeMismatch(format!(
            "label_count {} but the label set has {LABEL_COUNT}",
            header.vocab.label_count
        )));
    }
    if header.vocab.hash() != header.vocab_hash {
        return Err(ModelError::CorruptFile("vocabulary hash mismatch".into()));
    }
    let mut vocab = header.vocab;
    vocab.reindex();

    let mut tensors = Vec::with_capacity(header.params.len());
    for spec in &header.params {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| ModelError::CorruptFile("parameter name is not UTF-8".into()))?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>, _>>()?;
        if name != spec.name || shape != spec.shape {
            return Err(ModelError::CorruptFile(format!("parameter block {name} disagrees with header")));
        }
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let bytes = numel
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| ModelError::CorruptFile("parameter size overflow".into()))?;
        let data = r
            .take(bytes)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        tensors.push((spec.clone(), data));
    }
    if r.pos != bytes.len() {
        return Err(ModelError::CorruptFile(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let model = DiacriticModel::from_parts(header.config, vocab, tensors)?;
    Ok(Checkpoint { model, history: header.history })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_checkpoint(&bytes)
}
