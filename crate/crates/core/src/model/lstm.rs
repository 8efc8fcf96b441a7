//! LSTM with `[input, forget, cell, output]` gate layout and full
//! backpropagation through time.

use super::params::{Init, ParamBuilder, ParamRef};
use crate::scalar::Scalar;
use crate::tensor::{add_col_sums, add_row_bias, axpy, dot, gemm, matmul, Op};

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[derive(Clone, Debug)]
pub struct Lstm {
    pub kernel: ParamRef,
    pub recurrent: ParamRef,
    pub bias: ParamRef,
    pub input: usize,
    pub hidden: usize,
}

pub struct LstmCache<T> {
    x: Vec<T>,
    n: usize,
    reverse: bool,
    /// Activated gates per position, `n x 4h`.
    gates: Vec<T>,
    tanh_c: Vec<T>,
    c_prev: Vec<T>,
    h_prev: Vec<T>,
}

impl Lstm {
    pub fn new(pb: &mut ParamBuilder, name: &str, input: usize, hidden: usize) -> Self {
        let kernel = pb.add(format!("{name}.kernel"), input, 4 * hidden, Init::Glorot);
        let recurrent = pb.add(format!("{name}.recurrent_kernel"), hidden, 4 * hidden, Init::Glorot);
        let bias = pb.add(format!("{name}.bias"), 1, 4 * hidden, Init::ForgetBias);
        Self { kernel, recurrent, bias, input, hidden }
    }

    /// Runs over `x` (`n x input`); with `reverse` the recurrence starts at the
    /// last position. Outputs stay aligned with input positions.
    pub fn forward<T: Scalar>(&self, p: &[T], x: &[T], n: usize, reverse: bool) -> (Vec<T>, LstmCache<T>) {
        let h = self.hidden;
        let mut pre = matmul(n, self.input, 4 * h, x, Op::N, self.kernel.of(p), Op::N);
        add_row_bias(&mut pre, self.bias.of(p));
        let wh = self.recurrent.of(p);

        let mut out = vec![T::zero(); n * h];
        let mut c_all = vec![T::zero(); n * h];
        let mut tanh_c = vec![T::zero(); n * h];
        let mut c_prev_all = vec![T::zero(); n * h];
        let mut h_prev_all = vec![T::zero(); n * h];
        let mut h_prev = vec![T::zero(); h];
        let mut c_prev = vec![T::zero(); h];

        for step in 0..n {
            let t = if reverse { n - 1 - step } else { step };
            let z = &mut pre[t * 4 * h..(t + 1) * 4 * h];
            for (k, &hk) in h_prev.iter().enumerate() {
                if hk != T::zero() {
                    axpy(hk, &wh[k * 4 * h..(k + 1) * 4 * h], z);
                }
            }
            for j in 0..h {
                z[j] = sigmoid(z[j]);
                z[h + j] = sigmoid(z[h + j]);
                z[2 * h + j] = z[2 * h + j].tanh();
                z[3 * h + j] = sigmoid(z[3 * h + j]);
            }
            h_prev_all[t * h..(t + 1) * h].copy_from_slice(&h_prev);
            c_prev_all[t * h..(t + 1) * h].copy_from_slice(&c_prev);
            for j in 0..h {
                let c = z[h + j] * c_prev[j] + z[j] * z[2 * h + j];
                let tc = c.tanh();
                c_all[t * h + j] = c;
                tanh_c[t * h + j] = tc;
                out[t * h + j] = z[3 * h + j] * tc;
            }
            c_prev.copy_from_slice(&c_all[t * h..(t + 1) * h]);
            h_prev.copy_from_slice(&out[t * h..(t + 1) * h]);
        }
        let cache = LstmCache {
            x: x.to_vec(),
            n,
            reverse,
            gates: pre,
            tanh_c,
            c_prev: c_prev_all,
            h_prev: h_prev_all,
        };
        (out, cache)
    }

    pub fn backward<T: Scalar>(&self, p: &[T], g: &mut [T], cache: &LstmCache<T>, dy: &[T]) -> Vec<T> {
        let (h, n) = (self.hidden, cache.n);
        let wh = self.recurrent.of(p);
        let mut dz_all = vec![T::zero(); n * 4 * h];
        let mut dh_next = vec![T::zero(); h];
        let mut dc_next = vec![T::zero(); h];
        let one = T::one();

        for step in (0..n).rev() {
            let t = if cache.reverse { n - 1 - step } else { step };
            let gt = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
            let dz = &mut dz_all[t * 4 * h..(t + 1) * 4 * h];
            for j in 0..h {
                let (i, f, gg, o) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
                let tc = cache.tanh_c[t * h + j];
                let dh = dy[t * h + j] + dh_next[j];
                let d_o = dh * tc;
                let dc = dh * o * (one - tc * tc) + dc_next[j];
                let di = dc * gg;
                let dg = dc * i;
                let df = dc * cache.c_prev[t * h + j];
                dc_next[j] = dc * f;
                dz[j] = di * i * (one - i);
                dz[h + j] = df * f * (one - f);
                dz[2 * h + j] = dg * (one - gg * gg);
                dz[3 * h + j] = d_o * o * (one - o);
            }
            for (k, dhk) in dh_next.iter_mut().enumerate() {
                *dhk = dot(&wh[k * 4 * h..(k + 1) * 4 * h], dz);
            }
        }
        gemm(self.input, n, 4 * h, &cache.x, Op::T, &dz_all, Op::N, one, self.kernel.of_mut(g));
        gemm(h, n, 4 * h, &cache.h_prev, Op::T, &dz_all, Op::N, one, self.recurrent.of_mut(g));
        add_col_sums(&dz_all, self.bias.of_mut(g));
        matmul(n, 4 * h, self.input, &dz_all, Op::N, self.kernel.of(p), Op::T)
    }
}

/// Forward and backward LSTMs with concatenated `[fwd, bwd]` outputs.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

pub struct BiLstmCache<T> {
    fwd: LstmCache<T>,
    bwd: LstmCache<T>,
}

impl BiLstm {
    pub fn new(pb: &mut ParamBuilder, name: &str, input: usize, hidden: usize) -> Self {
        Self {
            fwd: Lstm::new(pb, &format!("{name}.forward"), input, hidden),
            bwd: Lstm::new(pb, &format!("{name}.backward"), input, hidden),
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.fwd.hidden
    }

    pub fn forward<T: Scalar>(&self, p: &[T], x: &[T], n: usize) -> (Vec<T>, BiLstmCache<T>) {
        let h = self.fwd.hidden;
        let (yf, cf) = self.fwd.forward(p, x, n, false);
        let (yb, cb) = self.bwd.forward(p, x, n, true);
        let mut y = Vec::with_capacity(n * 2 * h);
        for t in 0..n {
            y.extend_from_slice(&yf[t * h..(t + 1) * h]);
            y.extend_from_slice(&yb[t * h..(t + 1) * h]);
        }
        (y, BiLstmCache { fwd: cf, bwd: cb })
    }

    pub fn backward<T: Scalar>(&self, p: &[T], g: &mut [T], cache: &BiLstmCache<T>, dy: &[T]) -> Vec<T> {
        let h = self.fwd.hidden;
        let n = cache.fwd.n;
        let mut df = Vec::with_capacity(n * h);
        let mut db = Vec::with_capacity(n * h);
        for row in dy.chunks_exact(2 * h) {
            df.extend_from_slice(&row[..h]);
            db.extend_from_slice(&row[h..]);
        }
        let mut dx = self.fwd.backward(p, g, &cache.fwd, &df);
        let dxb = self.bwd.backward(p, g, &cache.bwd, &db);
        for (a, b) in dx.iter_mut().zip(dxb) {
            *a += b;
        }
        dx
    }
}
