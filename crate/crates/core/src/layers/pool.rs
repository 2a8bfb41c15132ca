//! Max pooling and flattening.

use super::Mode;
use crate::error::{Error, Result};
use crate::tensor::{conv_out_extent, Tensor};

/// `d×d` max pooling with stride `s`; odd remainders are floored away.
/// Argmax positions are cached so backward routes each output gradient to
/// exactly one input position (ties broken by the first index in window
/// scan order).
pub struct MaxPool {
    pub d: usize,
    pub s: usize,
    cache: Option<Cache>,
}

struct Cache {
    in_shape: Vec<usize>,
    argmax: Vec<usize>,
}

impl MaxPool {
    pub fn new(d: usize, s: usize) -> Result<Self> {
        if d == 0 || s == 0 {
            return Err(Error::Spec("pool size and stride must be at least 1".into()));
        }
        Ok(MaxPool { d, s, cache: None })
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let [n, h, w, c] = match x.shape() {
            [n, h, w, c] => [*n, *h, *w, *c],
            s => {
                return Err(Error::Dimension(format!(
                    "maxpool expects [N, H, W, C], got {s:?}"
                )))
            }
        };
        if h < self.d || w < self.d {
            return Err(Error::Dimension(format!(
                "pool window {} exceeds input {h}x{w}",
                self.d
            )));
        }
        let ho = conv_out_extent(h, self.d, 0, self.s);
        let wo = conv_out_extent(w, self.d, 0, self.s);
        let mut out = Tensor::zeros(&[n, ho, wo, c]);
        let mut argmax = vec![0usize; n * ho * wo * c];
        for img in 0..n {
            for oh in 0..ho {
                for ow in 0..wo {
                    for ch in 0..c {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0;
                        for ki in 0..self.d {
                            for kj in 0..self.d {
                                let ih = oh * self.s + ki;
                                let iw = ow * self.s + kj;
                                let idx = ((img * h + ih) * w + iw) * c + ch;
                                let v = x.data()[idx];
                                if v > best {
                                    best = v;
                                    best_idx = idx;
                                }
                            }
                        }
                        let o = ((img * ho + oh) * wo + ow) * c + ch;
                        out.data_mut()[o] = best;
                        argmax[o] = best_idx;
                    }
                }
            }
        }
        if mode == Mode::Train {
            self.cache = Some(Cache {
                in_shape: x.shape().to_vec(),
                argmax,
            });
        }
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("maxpool backward without a cached forward pass".into()))?;
        if dy.len() != cache.argmax.len() {
            return Err(Error::Dimension(format!(
                "maxpool backward gradient has {} elements, cache has {}",
                dy.len(),
                cache.argmax.len()
            )));
        }
        let mut dx = Tensor::zeros(&cache.in_shape);
        for (&src, &g) in cache.argmax.iter().zip(dy.data()) {
            dx.data_mut()[src] += g;
        }
        Ok(dx)
    }
}

/// `[N,H,W,C] -> [N, H·W·C]`; backward restores the cached shape.
pub struct Flatten {
    cache: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Flatten { cache: None }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let [n, h, w, c] = match x.shape() {
            [n, h, w, c] => [*n, *h, *w, *c],
            s => {
                return Err(Error::Dimension(format!(
                    "flatten expects [N, H, W, C], got {s:?}"
                )))
            }
        };
        if mode == Mode::Train {
            self.cache = Some(x.shape().to_vec());
        }
        x.reshape(&[n, h * w * c])
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let shape = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("flatten backward without a cached forward pass".into()))?;
        dy.reshape(shape)
    }
}

impl Default for Flatten {
    fn default() -> Self {
        Flatten::new()
    }
}
