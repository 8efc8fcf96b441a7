//! Multi-head scaled dot-product attention, used both as self-attention in
//! the transformer blocks and as the text-to-ASR cross-attention.

use super::layers::Linear;
use super::params::ParamBuilder;
use crate::scalar::Scalar;
use crate::tensor::{matmul, softmax_in_place, Op};

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
    pub dim: usize,
}

pub struct AttentionCache<T> {
    xq: Vec<T>,
    xkv: Vec<T>,
    nq: usize,
    nk: usize,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// `heads x nq x nk` softmax weights.
    pub weights: Vec<T>,
    ctx: Vec<T>,
}

fn take_cols<T: Scalar>(x: &[T], n: usize, stride: usize, start: usize, width: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n * width);
    for r in 0..n {
        out.extend_from_slice(&x[r * stride + start..r * stride + start + width]);
    }
    out
}

fn put_cols<T: Scalar>(dst: &mut [T], src: &[T], n: usize, stride: usize, start: usize, width: usize) {
    for r in 0..n {
        dst[r * stride + start..r * stride + start + width].copy_from_slice(&src[r * width..(r + 1) * width]);
    }
}

impl MultiHeadAttention {
    pub fn new(pb: &mut ParamBuilder, name: &str, dim: usize, heads: usize) -> Self {
        assert!(dim % heads == 0, "attention dim must be divisible by heads");
        Self {
            query: Linear::new(pb, &format!("{name}.query"), dim, dim),
            key: Linear::new(pb, &format!("{name}.key"), dim, dim),
            value: Linear::new(pb, &format!("{name}.value"), dim, dim),
            output: Linear::new(pb, &format!("{name}.output"), dim, dim),
            heads,
            dim,
        }
    }

    fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// `xq` is `nq x dim` (queries), `xkv` is `nk x dim` (keys and values).
    pub fn forward<T: Scalar>(&self, p: &[T], xq: &[T], nq: usize, xkv: &[T], nk: usize) -> (Vec<T>, AttentionCache<T>) {
        let (d, dh) = (self.dim, self.head_dim());
        let scale = T::one() / T::of(dh as f64).sqrt();
        let q = self.query.forward(p, xq, nq);
        let k = self.key.forward(p, xkv, nk);
        let v = self.value.forward(p, xkv, nk);
        let mut weights = Vec::with_capacity(self.heads * nq * nk);
        let mut ctx = vec![T::zero(); nq * d];
        for h in 0..self.heads {
            let qh = take_cols(&q, nq, d, h * dh, dh);
            let kh = take_cols(&k, nk, d, h * dh, dh);
            let vh = take_cols(&v, nk, d, h * dh, dh);
            let mut a = matmul(nq, dh, nk, &qh, Op::N, &kh, Op::T);
            for row in a.chunks_exact_mut(nk) {
                for s in row.iter_mut() {
                    *s *= scale;
                }
                softmax_in_place(row);
            }
            let ch = matmul(nq, nk, dh, &a, Op::N, &vh, Op::N);
            put_cols(&mut ctx, &ch, nq, d, h * dh, dh);
            weights.extend_from_slice(&a);
        }
        let out = self.output.forward(p, &ctx, nq);
        let cache = AttentionCache { xq: xq.to_vec(), xkv: xkv.to_vec(), nq, nk, q, k, v, weights, ctx };
        (out, cache)
    }

    /// Returns `(dL/dxq, dL/dxkv)`.
    pub fn backward<T: Scalar>(&self, p: &[T], g: &mut [T], c: &AttentionCache<T>, dout: &[T]) -> (Vec<T>, Vec<T>) {
        let (d, dh, nq, nk) = (self.dim, self.head_dim(), c.nq, c.nk);
        let scale = T::one() / T::of(dh as f64).sqrt();
        let dctx = self.output.backward(p, g, &c.ctx, dout, nq);
        let mut dq = vec![T::zero(); nq * d];
        let mut dk = vec![T::zero(); nk * d];
        let mut dv = vec![T::zero(); nk * d];
        for h in 0..self.heads {
            let a = &c.weights[h * nq * nk..(h + 1) * nq * nk];
            let qh = take_cols(&c.q, nq, d, h * dh, dh);
            let kh = take_cols(&c.k, nk, d, h * dh, dh);
            let vh = take_cols(&c.v, nk, d, h * dh, dh);
            let dch = take_cols(&dctx, nq, d, h * dh, dh);
            let dvh = matmul(nk, nq, dh, a, Op::T, &dch, Op::N);
            let mut ds = matmul(nq, dh, nk, &dch, Op::N, &vh, Op::T);
            for (drow, arow) in ds.chunks_exact_mut(nk).zip(a.chunks_exact(nk)) {
                let dot: T = drow.iter().zip(arow).map(|(&x, &y)| x * y).sum();
                for (dv_, &av) in drow.iter_mut().zip(arow) {
                    *dv_ = av * (*dv_ - dot) * scale;
                }
            }
            let dqh = matmul(nq, nk, dh, &ds, Op::N, &kh, Op::N);
            let dkh = matmul(nk, nq, dh, &ds, Op::T, &qh, Op::N);
            put_cols(&mut dq, &dqh, nq, d, h * dh, dh);
            put_cols(&mut dk, &dkh, nk, d, h * dh, dh);
            put_cols(&mut dv, &dvh, nk, d, h * dh, dh);
        }
        let dxq = self.query.backward(p, g, &c.xq, &dq, nq);
        let mut dxkv = self.key.backward(p, g, &c.xkv, &dk, nk);
        let dxv = self.value.backward(p, g, &c.xkv, &dv, nk);
        for (a, b) in dxkv.iter_mut().zip(dxv) {
            *a += b;
        }
        (dxq, dxkv)
    }
}
