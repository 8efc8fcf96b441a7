//! The full diacritizer: text encoder, optional ASR encoder fused by
//! cross-attention, and a per-character softmax head.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::attention::{AttentionCache, MultiHeadAttention};
use super::batch::EncodedBatch;
use super::config::ModelConfig;
use super::encoder::{Encoder, EncoderCache};
use super::layers::Linear;
use super::params::{ParamBuilder, ParamRef, ParamSpec};
use super::vocab::Vocabulary;
use super::ModelError;
use crate::scalar::Scalar;
use crate::seeding::rng_for;
use crate::tensor::softmax_in_place;
use crate::text::LABEL_COUNT;

/// Whether dropout is active. Training mode carries the seed of the batch's
/// dropout streams; row `b` draws from `(seed, b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

/// Cross-attention weights of one example: `heads x lq x lk`, rows summing to
/// one over the unmasked keys and zero in masked columns.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap {
    pub heads: usize,
    pub lq: usize,
    pub lk: usize,
    pub weights: Vec<f64>,
}

impl AttentionMap {
    pub fn get(&self, head: usize, q: usize, k: usize) -> f64 {
        self.weights[(head * self.lq + q) * self.lk + k]
    }

    pub fn row(&self, head: usize, q: usize) -> &[f64] {
        let s = (head * self.lq + q) * self.lk;
        &self.weights[s..s + self.lk]
    }
}

#[derive(Clone, Debug)]
pub struct ForwardOutput<T> {
    /// `B x Lt x 15` label distributions; padded rows are uniform.
    pub probs: Vec<T>,
    pub batch: usize,
    pub text_len: usize,
    /// One map per row when the model is multimodal.
    pub attention: Vec<AttentionMap>,
}

impl<T: Scalar> ForwardOutput<T> {
    pub fn probs_at(&self, b: usize, t: usize) -> &[T] {
        let s = (b * self.text_len + t) * LABEL_COUNT;
        &self.probs[s..s + LABEL_COUNT]
    }
}

/// Layer graph without parameter values.
#[derive(Clone, Debug)]
struct Network {
    text: Encoder,
    asr: Option<Encoder>,
    cross: Option<MultiHeadAttention>,
    head: Linear,
    specs: Vec<ParamSpec>,
    refs: Vec<ParamRef>,
    builder_len: usize,
}

impl Network {
    fn build(cfg: &ModelConfig, vocab: &Vocabulary) -> (Self, ParamBuilder) {
        let mut pb = ParamBuilder::default();
        let text = Encoder::new(&mut pb, "text", cfg, vocab.text.len(), cfg.max_len_text);
        let (asr, cross) = if cfg.multimodal {
            let asr = Encoder::new(&mut pb, "asr", cfg, vocab.asr.len(), cfg.max_len_asr);
            let cross = MultiHeadAttention::new(&mut pb, "cross_attention", text.output_dim(), cfg.n_heads);
            (Some(asr), Some(cross))
        } else {
            (None, None)
        };
        let head_in = if cfg.multimodal && cfg.fuse_concat { 2 * text.output_dim() } else { text.output_dim() };
        let head = Linear::new(&mut pb, "classifier", head_in, vocab.label_count);
        let net = Self {
            text,
            asr,
            cross,
            head,
            specs: pb.specs(),
            refs: pb.refs(),
            builder_len: pb.len(),
        };
        (net, pb)
    }
}

struct ExampleCache<T> {
    n: usize,
    text: EncoderCache<T>,
    asr: Option<EncoderCache<T>>,
    cross: Option<AttentionCache<T>>,
    head_in: Vec<T>,
}

/// A diacritizer with its parameters, generic over the scalar type.
#[derive(Clone, Debug)]
pub struct DiacriticModel<T: Scalar> {
    config: ModelConfig,
    vocab: Vocabulary,
    net: Network,
    params: Vec<T>,
}

impl<T: Scalar> DiacriticModel<T> {
    /// Fresh model with seeded initial parameters.
    pub fn new(config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let (net, pb) = Network::build(&config, &vocab);
        let params = pb.initialize(&mut rng_for(seed, &[0x1417]));
        Ok(Self { config, vocab, net, params })
    }

    /// Rebuilds a model from stored parameter tensors, checking names and shapes.
    pub fn from_parts(
        config: ModelConfig,
        vocab: Vocabulary,
        tensors: Vec<(ParamSpec, Vec<T>)>,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let (net, _) = Network::build(&config, &vocab);
        if tensors.len() != net.specs.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "expected {} parameter tensors, found {}",
                net.specs.len(),
                tensors.len()
            )));
        }
        let mut params = Vec::with_capacity(net.builder_len);
        for ((spec, data), want) in tensors.into_iter().zip(&net.specs) {
            let numel: usize = want.shape.iter().product();
            if spec != *want || data.len() != numel {
                return Err(ModelError::ShapeMismatch(format!(
                    "parameter {} {:?} does not match expected {} {:?}",
                    spec.name, spec.shape, want.name, want.shape
                )));
            }
            params.extend(data);
        }
        Ok(Self { config, vocab, net, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.len()
    }

    /// `(spec, values)` for every tensor in declaration order.
    pub fn named_parameters(&self) -> impl Iterator<Item = (&ParamSpec, &[T])> {
        self.net.specs.iter().zip(&self.net.refs).map(|(s, r)| (s, r.of(&self.params)))
    }

    /// Index range of the named tensor in the flat parameter vector.
    pub fn param_range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        self.net
            .specs
            .iter()
            .zip(&self.net.refs)
            .find(|(s, _)| s.name == name)
            .map(|(_, r)| r.offset..r.offset + r.len())
    }

    pub fn param_name_at(&self, index: usize) -> &str {
        self.net
            .refs
            .iter()
            .position(|r| (r.offset..r.offset + r.len()).contains(&index))
            .map(|i| self.net.specs[i].name.as_str())
            .unwrap_or("?")
    }

    /// Same model with parameters converted to another scalar type.
    pub fn cast<U: Scalar>(&self) -> DiacriticModel<U> {
        DiacriticModel {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            net: self.net.clone(),
            params: self.params.iter().map(|&v| U::of(v.as_f64())).collect(),
        }
    }

    fn forward_example(
        &self,
        p: &[T],
        text_ids: &[u32],
        asr_ids: &[u32],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (Vec<T>, ExampleCache<T>) {
        let n = text_ids.len();
        let text = self.net.text.forward(p, text_ids, rng.as_deref_mut());
        let d = self.net.text.output_dim();
        let (asr, cross, head_in) = match (&self.net.asr, &self.net.cross) {
            (Some(asr_enc), Some(cross)) => {
                let asr = asr_enc.forward(p, asr_ids, rng.as_deref_mut());
                let (fused, cc) = cross.forward(p, text.output(), n, asr.output(), asr_ids.len());
                let head_in = if self.config.fuse_concat {
                    let mut h = Vec::with_capacity(n * 2 * d);
                    for (f, t) in fused.chunks_exact(d).zip(text.output().chunks_exact(d)) {
                        h.extend_from_slice(f);
                        h.extend_from_slice(t);
                    }
                    h
                } else {
                    fused
                };
                (Some(asr), Some(cc), head_in)
            }
            _ => (None, None, text.output().to_vec()),
        };
        let logits = self.net.head.forward(p, &head_in, n);
        (logits, ExampleCache { n, text, asr, cross, head_in })
    }

    fn backward_example(&self, p: &[T], g: &mut [T], c: &ExampleCache<T>, dlogits: &[T]) {
        let d = self.net.text.output_dim();
        let dhead = self.net.head.backward(p, g, &c.head_in, dlogits, c.n);
        match (&self.net.asr, &self.net.cross, &c.asr, &c.cross) {
            (Some(asr_enc), Some(cross), Some(asr_c), Some(cross_c)) => {
                let (dfused, dtext_direct) = if self.config.fuse_concat {
                    let mut df = Vec::with_capacity(c.n * d);
                    let mut dt = Vec::with_capacity(c.n * d);
                    for row in dhead.chunks_exact(2 * d) {
                        df.extend_from_slice(&row[..d]);
                        dt.extend_from_slice(&row[d..]);
                    }
                    (df, Some(dt))
                } else {
                    (dhead, None)
                };
                let (mut dtext, dasr) = cross.backward(p, g, cross_c, &dfused);
                if let Some(dt) = dtext_direct {
                    for (a, b) in dtext.iter_mut().zip(dt) {
                        *a += b;
                    }
                }
                self.net.text.backward(p, g, &c.text, &dtext);
                asr_enc.backward(p, g, asr_c, &dasr);
            }
            _ => self.net.text.backward(p, g, &c.text, &dhead),
        }
    }

    fn check_batch(&self, batch: &EncodedBatch) -> Result<(), ModelError> {
        if batch.text_len > self.config.max_len_text {
            return Err(ModelError::Shape(format!(
                "text length {} exceeds max_len_text {}",
                batch.text_len, self.config.max_len_text
            )));
        }
        if self.config.multimodal && batch.asr_len > self.config.max_len_asr {
            return Err(ModelError::Shape(format!(
                "ASR length {} exceeds max_len_asr {}",
                batch.asr_len, self.config.max_len_asr
            )));
        }
        if batch.text_ids.iter().any(|&id| id as usize >= self.vocab.text.len()) {
            return Err(ModelError::Shape("text id outside vocabulary".into()));
        }
        if batch.label_ids.iter().any(|&id| id as usize >= self.vocab.label_count) {
            return Err(ModelError::Shape("label id outside label set".into()));
        }
        if self.config.multimodal {
            if batch.asr_ids.iter().any(|&id| id as usize >= self.vocab.asr.len()) {
                return Err(ModelError::Shape("ASR id outside vocabulary".into()));
            }
            if (0..batch.batch).any(|b| batch.text_length(b) > 0 && batch.asr_length(b) == 0) {
                return Err(ModelError::Shape("multimodal row without ASR tokens".into()));
            }
        }
        Ok(())
    }

    fn row_rng(mode: Mode, b: usize) -> Option<ChaCha8Rng> {
        match mode {
            Mode::Eval => None,
            Mode::Train { seed } => Some(rng_for(seed, &[b as u64])),
        }
    }

    /// Label distributions for every position and, for multimodal models,
    /// the cross-attention weights of every row.
    pub fn forward(&self, batch: &EncodedBatch, mode: Mode) -> Result<ForwardOutput<T>, ModelError> {
        self.check_batch(batch)?;
        let lt = batch.text_len;
        let uniform = T::one() / T::of(LABEL_COUNT as f64);
        let mut probs = vec![uniform; batch.batch * lt * LABEL_COUNT];
        let mut attention = Vec::new();
        for b in 0..batch.batch {
            let n = batch.text_length(b);
            let mut rng = Self::row_rng(mode, b);
            let (mut logits, cache) =
                self.forward_example(&self.params, batch.text_row(b), batch.asr_row(b), rng.as_mut());
            for row in logits.chunks_exact_mut(LABEL_COUNT) {
                softmax_in_place(row);
            }
            let s = b * lt * LABEL_COUNT;
            probs[s..s + n * LABEL_COUNT].copy_from_slice(&logits);
            if let Some(cc) = &cache.cross {
                let (heads, lk, nk) = (self.config.n_heads, batch.asr_len, batch.asr_length(b));
                let mut w = vec![0.0; heads * n * lk];
                for h in 0..heads {
                    for q in 0..n {
                        for k in 0..nk {
                            w[(h * n + q) * lk + k] = cc.weights[(h * n + q) * nk + k].as_f64();
                        }
                    }
                }
                attention.push(AttentionMap { heads, lq: n, lk, weights: w });
            }
        }
        Ok(ForwardOutput { probs, batch: batch.batch, text_len: lt, attention })
    }

    /// Probabilities (`n x 15`) and cross-attention (`heads x n x m`) for a
    /// single unpadded example in eval mode.
    pub fn predict_ids(&self, text_ids: &[u32], asr_ids: &[u32]) -> (Vec<T>, Option<Vec<T>>) {
        let (mut logits, cache) = self.forward_example(&self.params, text_ids, asr_ids, None);
        for row in logits.chunks_exact_mut(LABEL_COUNT) {
            softmax_in_place(row);
        }
        (logits, cache.cross.map(|c| c.weights))
    }

    /// Summed cross-entropy, counted positions and accumulated gradients for a
    /// subset of rows.
    fn shard_gradient(&self, batch: &EncodedBatch, rows: std::ops::Range<usize>, mode: Mode, norm: T) -> (T, Vec<T>) {
        let mut grads = vec![T::zero(); self.params.len()];
        let mut total = T::zero();
        for b in rows {
            let labels = batch.label_row(b);
            let mask = batch.loss_mask_row(b);
            if !mask.iter().any(|&m| m) {
                continue;
            }
            let mut rng = Self::row_rng(mode, b);
            let (logits, cache) =
                self.forward_example(&self.params, batch.text_row(b), batch.asr_row(b), rng.as_mut());
            let mut dlogits = vec![T::zero(); logits.len()];
            for (t, (z, dz)) in logits.chunks_exact(LABEL_COUNT).zip(dlogits.chunks_exact_mut(LABEL_COUNT)).enumerate() {
                if !mask[t] {
                    continue;
                }
                let m = z.iter().copied().fold(T::neg_infinity(), T::max);
                let sum: T = z.iter().map(|&v| (v - m).exp()).sum();
                let lse = m + sum.ln();
                let y = labels[t] as usize;
                total += lse - z[y];
                for (k, (dzk, &zk)) in dz.iter_mut().zip(z).enumerate() {
                    let pk = (zk - lse).exp();
                    *dzk = (pk - if k == y { T::one() } else { T::zero() }) * norm;
                }
            }
            self.backward_example(&self.params, &mut grads, &cache, &dlogits);
        }
        (total, grads)
    }

    /// Mean cross-entropy over unmasked positions and its gradient with
    /// respect to every parameter. With no counted position both are zero.
    ///
    /// Rows are split into shards of `shard_size` that run in parallel; shard
    /// results are summed in shard order, so the result does not depend on
    /// thread scheduling.
    pub fn loss_and_gradient(&self, batch: &EncodedBatch, mode: Mode, shard_size: usize) -> Result<(T, Vec<T>), ModelError> {
        self.check_batch(batch)?;
        let count = batch.loss_mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Ok((T::zero(), vec![T::zero(); self.params.len()]));
        }
        let norm = T::one() / T::of(count as f64);
        let shard = shard_size.max(1);
        let shards: Vec<std::ops::Range<usize>> =
            (0..batch.batch).step_by(shard).map(|s| s..(s + shard).min(batch.batch)).collect();
        let parts: Vec<(T, Vec<T>)> =
            shards.into_par_iter().map(|r| self.shard_gradient(batch, r, mode, norm)).collect();
        let mut iter = parts.into_iter();
        let (mut loss, mut grads) = iter.next().expect("at least one shard");
        for (l, g) in iter {
            loss += l;
            for (a, b) in grads.iter_mut().zip(g) {
                *a += b;
            }
        }
        Ok((loss * norm, grads))
    }

    /// Mean loss only (no gradient), e.g. for finite differences.
    pub fn batch_loss(&self, batch: &EncodedBatch, mode: Mode) -> Result<T, ModelError> {
        let out = self.forward(batch, mode)?;
        if !batch.loss_mask.iter().any(|&m| m) {
            return Ok(T::zero());
        }
        super::loss::loss(&out.probs, &batch.label_ids, &batch.loss_mask)
    }
}
