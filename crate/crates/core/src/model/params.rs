//! Flat parameter storage. Layers refer to named, shaped slices of one
//! contiguous buffer; gradients and optimizer moments share the layout.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Location of one parameter tensor inside the flat buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamRef {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamRef {
    #[inline]
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn of<'a, T>(&self, buf: &'a [T]) -> &'a [T] {
        &buf[self.offset..self.offset + self.len()]
    }

    #[inline]
    pub fn of_mut<'a, T>(&self, buf: &'a mut [T]) -> &'a mut [T] {
        &mut buf[self.offset..self.offset + self.len()]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

/// How a tensor is initialised.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    Glorot,
    Uniform(f64),
    Const(f64),
    /// Zeros, except ones on the forget-gate quarter of a `[i f g o]` bias.
    ForgetBias,
}

/// Collects parameter declarations while a network is being assembled.
#[derive(Debug, Default)]
pub struct ParamBuilder {
    specs: Vec<(ParamSpec, ParamRef, Init)>,
    len: usize,
}

impl ParamBuilder {
    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, init: Init) -> ParamRef {
        let r = ParamRef { offset: self.len, rows, cols };
        let shape = if rows == 1 { vec![cols] } else { vec![rows, cols] };
        self.specs.push((ParamSpec { name: name.into(), shape }, r, init));
        self.len += rows * cols;
        r
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        self.specs.iter().map(|(s, _, _)| s.clone()).collect()
    }

    pub fn refs(&self) -> Vec<ParamRef> {
        self.specs.iter().map(|(_, r, _)| *r).collect()
    }

    /// Draws initial values in declaration order.
    pub fn initialize<T: Scalar>(&self, rng: &mut ChaCha8Rng) -> Vec<T> {
        let mut data = vec![T::zero(); self.len];
        for (_, r, init) in &self.specs {
            let slot = r.of_mut(&mut data);
            match *init {
                Init::Glorot => {
                    let limit = (6.0 / (r.rows + r.cols) as f64).sqrt();
                    for v in slot.iter_mut() {
                        *v = T::of(rng.gen_range(-limit..limit));
                    }
                }
                Init::Uniform(a) => {
                    for v in slot.iter_mut() {
                        *v = T::of(rng.gen_range(-a..a));
                    }
                }
                Init::Const(c) => slot.fill(T::of(c)),
                Init::ForgetBias => {
                    let h = slot.len() / 4;
                    slot[h..2 * h].fill(T::one());
                }
            }
        }
        data
    }
}
