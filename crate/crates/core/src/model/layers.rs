//! Elementary layers with hand-written backward passes. Activations are
//! row-major `n x d` slices; every backward accumulates into a gradient
//! buffer that shares the parameter layout.

use rand::Rng;

use super::params::{Init, ParamBuilder, ParamRef};
use crate::scalar::Scalar;
use crate::tensor::{add_col_sums, add_row_bias, gemm, matmul, Op};

/// Affine map `y = x W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamRef,
    pub b: ParamRef,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(pb: &mut ParamBuilder, name: &str, d_in: usize, d_out: usize) -> Self {
        let w = pb.add(format!("{name}.kernel"), d_in, d_out, Init::Glorot);
        let b = pb.add(format!("{name}.bias"), 1, d_out, Init::Const(0.0));
        Self { w, b, d_in, d_out }
    }

    pub fn forward<T: Scalar>(&self, p: &[T], x: &[T], n: usize) -> Vec<T> {
        let mut y = matmul(n, self.d_in, self.d_out, x, Op::N, self.w.of(p), Op::N);
        add_row_bias(&mut y, self.b.of(p));
        y
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward<T: Scalar>(&self, p: &[T], g: &mut [T], x: &[T], dy: &[T], n: usize) -> Vec<T> {
        self.backward_params(g, x, dy, n);
        matmul(n, self.d_out, self.d_in, dy, Op::N, self.w.of(p), Op::T)
    }

    pub fn backward_params<T: Scalar>(&self, g: &mut [T], x: &[T], dy: &[T], n: usize) {
        gemm(self.d_in, n, self.d_out, x, Op::T, dy, Op::N, T::one(), self.w.of_mut(g));
        add_col_sums(dy, self.b.of_mut(g));
    }
}

/// Linear layer followed by ReLU.
#[derive(Clone, Debug)]
pub struct Dense {
    pub linear: Linear,
}

impl Dense {
    pub fn new(pb: &mut ParamBuilder, name: &str, d_in: usize, d_out: usize) -> Self {
        Self { linear: Linear::new(pb, name, d_in, d_out) }
    }

    pub fn forward<T: Scalar>(&self, p: &[T], x: &[T], n: usize) -> Vec<T> {
        let mut y = self.linear.forward(p, x, n);
        relu_in_place(&mut y);
        y
    }

    /// `y` is this layer's forward output.
    pub fn backward<T: Scalar>(&self, p: &[T], g: &mut [T], x: &[T], y: &[T], dy: &[T], n: usize) -> Vec<T> {
        let dz = relu_backward(y, dy);
        self.linear.backward(p, g, x, &dz, n)
    }
}

pub fn relu_in_place<T: Scalar>(x: &mut [T]) {
    for v in x.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Gradient through ReLU given its output.
pub fn relu_backward<T: Scalar>(y: &[T], dy: &[T]) -> Vec<T> {
    y.iter().zip(dy).map(|(&y, &d)| if y > T::zero() { d } else { T::zero() }).collect()
}

/// Lookup table.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamRef,
    pub dim: usize,
}

impl Embedding {
    pub fn new(pb: &mut ParamBuilder, name: &str, rows: usize, dim: usize) -> Self {
        Self { table: pb.add(format!("{name}.embeddings"), rows, dim, Init::Uniform(0.05)), dim }
    }

    pub fn rows(&self) -> usize {
        self.table.rows
    }

    pub fn forward<T: Scalar>(&self, p: &[T], ids: &[u32]) -> Vec<T> {
        let t = self.table.of(p);
        let mut out = Vec::with_capacity(ids.len() * self.dim);
        for &id in ids {
            let r = id as usize;
            out.extend_from_slice(&t[r * self.dim..(r + 1) * self.dim]);
        }
        out
    }

    /// Adds row `i` of the table to row `i` of `x` (position embeddings).
    pub fn add_positions<T: Scalar>(&self, p: &[T], x: &mut [T], n: usize) {
        let t = self.table.of(p);
        for (xi, ti) in x.chunks_exact_mut(self.dim).zip(t.chunks_exact(self.dim)).take(n) {
            for (a, &b) in xi.iter_mut().zip(ti) {
                *a += b;
            }
        }
    }

    pub fn backward<T: Scalar>(&self, g: &mut [T], ids: &[u32], dy: &[T]) {
        let gt = self.table.of_mut(g);
        for (row, &id) in dy.chunks_exact(self.dim).zip(ids) {
            let r = id as usize;
            for (a, &b) in gt[r * self.dim..(r + 1) * self.dim].iter_mut().zip(row) {
                *a += b;
            }
        }
    }

    pub fn backward_positions<T: Scalar>(&self, g: &mut [T], dy: &[T]) {
        let gt = self.table.of_mut(g);
        for (a, &b) in gt.iter_mut().zip(dy) {
            *a += b;
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamRef,
    pub beta: ParamRef,
    pub dim: usize,
    pub eps: f64,
}

pub struct LayerNormCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

impl LayerNorm {
    pub fn new(pb: &mut ParamBuilder, name: &str, dim: usize) -> Self {
        let gamma = pb.add(format!("{name}.gamma"), 1, dim, Init::Const(1.0));
        let beta = pb.add(format!("{name}.beta"), 1, dim, Init::Const(0.0));
        Self { gamma, beta, dim, eps: 1e-6 }
    }

    pub fn forward<T: Scalar>(&self, p: &[T], x: &[T]) -> (Vec<T>, LayerNormCache<T>) {
        let d = self.dim;
        let dn = T::of(d as f64);
        let (gamma, beta) = (self.gamma.of(p), self.beta.of(p));
        let mut y = vec![T::zero(); x.len()];
        let mut xhat = vec![T::zero(); x.len()];
        let mut inv_std = Vec::with_capacity(x.len() / d);
        for ((xr, yr), hr) in x.chunks_exact(d).zip(y.chunks_exact_mut(d)).zip(xhat.chunks_exact_mut(d)) {
            let mean = xr.iter().copied().sum::<T>() / dn;
            let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let inv = T::one() / (var + T::of(self.eps)).sqrt();
            inv_std.push(inv);
            for j in 0..d {
                hr[j] = (xr[j] - mean) * inv;
                yr[j] = gamma[j] * hr[j] + beta[j];
            }
        }
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward<T: Scalar>(&self, p: &[T], g: &mut [T], cache: &LayerNormCache<T>, dy: &[T]) -> Vec<T> {
        let d = self.dim;
        let dn = T::of(d as f64);
        let gamma = self.gamma.of(p);
        let mut dgamma = vec![T::zero(); d];
        let mut dbeta = vec![T::zero(); d];
        let mut dx = vec![T::zero(); dy.len()];
        let mut dxhat = vec![T::zero(); d];
        for (((dyr, hr), dxr), &inv) in dy
            .chunks_exact(d)
            .zip(cache.xhat.chunks_exact(d))
            .zip(dx.chunks_exact_mut(d))
            .zip(&cache.inv_std)
        {
            let mut s1 = T::zero();
            let mut s2 = T::zero();
            for j in 0..d {
                dgamma[j] += dyr[j] * hr[j];
                dbeta[j] += dyr[j];
                dxhat[j] = dyr[j] * gamma[j];
                s1 += dxhat[j];
                s2 += dxhat[j] * hr[j];
            }
            for j in 0..d {
                dxr[j] = inv / dn * (dn * dxhat[j] - s1 - hr[j] * s2);
            }
        }
        for (a, b) in self.gamma.of_mut(g).iter_mut().zip(dgamma) {
            *a += b;
        }
        for (a, b) in self.beta.of_mut(g).iter_mut().zip(dbeta) {
            *a += b;
        }
        dx
    }
}

/// Inverted-dropout scale factors (`0` or `1 / (1 - rate)`), or `None` when
/// dropout is inactive.
pub fn dropout_mask<T: Scalar, R: Rng>(len: usize, rate: f64, rng: Option<&mut R>) -> Option<Vec<T>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = T::of(1.0 / (1.0 - rate));
    Some((0..len).map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep }).collect())
}

pub fn apply_mask<T: Scalar>(x: &mut [T], mask: Option<&Vec<T>>) {
    if let Some(m) = mask {
        for (v, &k) in x.iter_mut().zip(m) {
            *v *= k;
        }
    }
}
