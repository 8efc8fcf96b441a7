//! Sequence encoders: transformer with learned absolute positions, and a
//! stacked bi-LSTM. Both end in ReLU dense layers producing `n x d_model`.

use rand_chacha::ChaCha8Rng;

use super::attention::{AttentionCache, MultiHeadAttention};
use super::config::{Backbone, ModelConfig};
use super::layers::{apply_mask, dropout_mask, Dense, Embedding, LayerNorm, LayerNormCache, Linear};
use super::lstm::{BiLstm, BiLstmCache};
use super::params::ParamBuilder;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
struct TransformerBlock {
    attention: MultiHeadAttention,
    norm1: LayerNorm,
    ff_in: Dense,
    ff_out: Linear,
    norm2: LayerNorm,
}

struct BlockCache<T> {
    attention: AttentionCache<T>,
    drop1: Option<Vec<T>>,
    norm1: LayerNormCache<T>,
    y1: Vec<T>,
    ff_hidden: Vec<T>,
    drop2: Option<Vec<T>>,
    norm2: LayerNormCache<T>,
}

impl TransformerBlock {
    fn new(pb: &mut ParamBuilder, name: &str, cfg: &ModelConfig) -> Self {
        Self {
            attention: MultiHeadAttention::new(pb, &format!("{name}.attention"), cfg.d_model, cfg.n_heads),
            norm1: LayerNorm::new(pb, &format!("{name}.norm1"), cfg.d_model),
            ff_in: Dense::new(pb, &format!("{name}.ff_in"), cfg.d_model, cfg.ff_dim),
            ff_out: Linear::new(pb, &format!("{name}.ff_out"), cfg.ff_dim, cfg.d_model),
            norm2: LayerNorm::new(pb, &format!("{name}.norm2"), cfg.d_model),
        }
    }

    fn forward<T: Scalar>(
        &self,
        p: &[T],
        x: &[T],
        n: usize,
        rate: f64,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (Vec<T>, BlockCache<T>) {
        let (mut a, attention) = self.attention.forward(p, x, n, x, n);
        let drop1 = dropout_mask(a.len(), rate, rng.as_deref_mut());
        apply_mask(&mut a, drop1.as_ref());
        for (ai, &xi) in a.iter_mut().zip(x) {
            *ai += xi;
        }
        let (y1, norm1) = self.norm1.forward(p, &a);
        let ff_hidden = self.ff_in.forward(p, &y1, n);
        let mut f = self.ff_out.forward(p, &ff_hidden, n);
        let drop2 = dropout_mask(f.len(), rate, rng.as_deref_mut());
        apply_mask(&mut f, drop2.as_ref());
        for (fi, &yi) in f.iter_mut().zip(&y1) {
            *fi += yi;
        }
        let (y2, norm2) = self.norm2.forward(p, &f);
        (y2, BlockCache { attention, drop1, norm1, y1, ff_hidden, drop2, norm2 })
    }

    fn backward<T: Scalar>(&self, p: &[T], g: &mut [T], c: &BlockCache<T>, dy: &[T], n: usize) -> Vec<T> {
        let dr2 = self.norm2.backward(p, g, &c.norm2, dy);
        let mut df = dr2.clone();
        apply_mask(&mut df, c.drop2.as_ref());
        let dh = self.ff_out.backward(p, g, &c.ff_hidden, &df, n);
        let mut dy1 = self.ff_in.backward(p, g, &c.y1, &c.ff_hidden, &dh, n);
        for (a, b) in dy1.iter_mut().zip(&dr2) {
            *a += *b;
        }
        let dr1 = self.norm1.backward(p, g, &c.norm1, &dy1);
        let mut da = dr1.clone();
        apply_mask(&mut da, c.drop1.as_ref());
        let (dxq, dxkv) = self.attention.backward(p, g, &c.attention, &da);
        dr1.iter().zip(dxq).zip(dxkv).map(|((&r, q), k)| r + q + k).collect()
    }
}

#[derive(Clone, Debug)]
enum Body {
    Transformer { positions: Embedding, blocks: Vec<TransformerBlock> },
    Lstm { layers: Vec<BiLstm> },
}

enum BodyCache<T> {
    Transformer(Vec<BlockCache<T>>),
    Lstm(Vec<(BiLstmCache<T>, Option<Vec<T>>)>),
}

/// One side (text or ASR) of the network.
#[derive(Clone, Debug)]
pub struct Encoder {
    embedding: Embedding,
    body: Body,
    dense: Vec<Dense>,
    dropout: f64,
    pub max_len: usize,
}

pub struct EncoderCache<T> {
    ids: Vec<u32>,
    n: usize,
    body: BodyCache<T>,
    /// Input of each dense layer followed by the final output.
    dense_io: Vec<Vec<T>>,
}

impl<T: Scalar> EncoderCache<T> {
    /// Encoder output (`n x d_model`).
    pub fn output(&self) -> &[T] {
        self.dense_io.last().expect("dense_io holds at least the body output")
    }
}

impl Encoder {
    pub fn new(pb: &mut ParamBuilder, name: &str, cfg: &ModelConfig, vocab_size: usize, max_len: usize) -> Self {
        let d = cfg.d_model;
        let embedding = Embedding::new(pb, &format!("{name}.token"), vocab_size, d);
        let (body, body_out) = match cfg.backbone {
            Backbone::Transformer => {
                let positions = Embedding::new(pb, &format!("{name}.position"), max_len, d);
                let blocks = (0..cfg.n_blocks)
                    .map(|i| TransformerBlock::new(pb, &format!("{name}.block{i}"), cfg))
                    .collect();
                (Body::Transformer { positions, blocks }, d)
            }
            Backbone::Lstm => {
                let layers: Vec<BiLstm> = (0..cfg.lstm_layers)
                    .map(|i| BiLstm::new(pb, &format!("{name}.bilstm{i}"), if i == 0 { d } else { 2 * d }, d))
                    .collect();
                (Body::Lstm { layers }, 2 * d)
            }
        };
        let dense = (0..cfg.dense_layers)
            .map(|i| Dense::new(pb, &format!("{name}.dense{i}"), if i == 0 { body_out } else { d }, d))
            .collect();
        Self { embedding, body, dense, dropout: cfg.dropout(), max_len }
    }

    /// Width of the encoder output.
    pub fn output_dim(&self) -> usize {
        match (self.dense.last(), &self.body) {
            (Some(d), _) => d.linear.d_out,
            (None, Body::Transformer { .. }) => self.embedding.dim,
            (None, Body::Lstm { layers }) => layers.last().map_or(self.embedding.dim, BiLstm::output_dim),
        }
    }

    pub fn forward<T: Scalar>(&self, p: &[T], ids: &[u32], mut rng: Option<&mut ChaCha8Rng>) -> EncoderCache<T> {
        let n = ids.len();
        assert!(n <= self.max_len, "sequence of {n} exceeds encoder maximum {}", self.max_len);
        let mut x = self.embedding.forward(p, ids);
        let body = match &self.body {
            Body::Transformer { positions, blocks } => {
                positions.add_positions(p, &mut x, n);
                let mut caches = Vec::with_capacity(blocks.len());
                for b in blocks {
                    let (y, c) = b.forward(p, &x, n, self.dropout, rng.as_deref_mut());
                    caches.push(c);
                    x = y;
                }
                BodyCache::Transformer(caches)
            }
            Body::Lstm { layers } => {
                let mut caches = Vec::with_capacity(layers.len());
                for l in layers {
                    let (mut y, c) = l.forward(p, &x, n);
                    let mask = dropout_mask(y.len(), self.dropout, rng.as_deref_mut());
                    apply_mask(&mut y, mask.as_ref());
                    caches.push((c, mask));
                    x = y;
                }
                BodyCache::Lstm(caches)
            }
        };
        let mut dense_io = Vec::with_capacity(self.dense.len() + 1);
        for d in &self.dense {
            let y = d.forward(p, &x, n);
            dense_io.push(std::mem::replace(&mut x, y));
        }
        dense_io.push(x);
        EncoderCache { ids: ids.to_vec(), n, body, dense_io }
    }

    pub fn backward<T: Scalar>(&self, p: &[T], g: &mut [T], c: &EncoderCache<T>, dy: &[T]) {
        let n = c.n;
        let mut grad = dy.to_vec();
        for (i, d) in self.dense.iter().enumerate().rev() {
            grad = d.backward(p, g, &c.dense_io[i], &c.dense_io[i + 1], &grad, n);
        }
        match (&self.body, &c.body) {
            (Body::Transformer { positions, blocks }, BodyCache::Transformer(caches)) => {
                for (b, bc) in blocks.iter().zip(caches).rev() {
                    grad = b.backward(p, g, bc, &grad, n);
                }
                positions.backward_positions(g, &grad);
            }
            (Body::Lstm { layers }, BodyCache::Lstm(caches)) => {
                for (l, (lc, mask)) in layers.iter().zip(caches).rev() {
                    apply_mask(&mut grad, mask.as_ref());
                    grad = l.backward(p, g, lc, &grad);
                }
            }
            _ => unreachable!("cache built by this encoder"),
        }
        self.embedding.backward(g, &c.ids, &grad);
    }
}
