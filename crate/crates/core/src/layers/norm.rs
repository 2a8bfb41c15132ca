//! Batch normalization over flat `[N, f]` activations.

use super::{LayerState, Mode};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const EPSILON: f64 = 1e-3;
const MOMENTUM: f64 = 0.99;

/// Train mode normalizes by the batch mean and (biased) variance, then
/// scales and shifts by gamma/beta and folds the batch statistics into the
/// running buffers with momentum 0.99. Infer mode normalizes by the running
/// buffers only and never mutates them.
pub struct BatchNorm {
    pub f: usize,
    pub state: LayerState,
    cache: Option<Cache>,
}

struct Cache {
    xhat: Tensor,
    inv_std: Vec<f64>,
    n: usize,
}

impl BatchNorm {
    pub fn new(f: usize) -> Self {
        let mut state = LayerState::default();
        state.params.insert("gamma".into(), Tensor::ones(&[f]));
        state.params.insert("beta".into(), Tensor::zeros(&[f]));
        state
            .buffers
            .insert("running_mean".into(), Tensor::zeros(&[f]));
        state
            .buffers
            .insert("running_var".into(), Tensor::ones(&[f]));
        BatchNorm {
            f,
            state,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let [n, f] = match x.shape() {
            [n, f] => [*n, *f],
            s => {
                return Err(Error::Dimension(format!(
                    "batch norm expects [N, f], got {s:?}"
                )))
            }
        };
        if f != self.f {
            return Err(Error::Dimension(format!(
                "batch norm built for {} features, input has {f}",
                self.f
            )));
        }
        let gamma = self.state.params["gamma"].data().to_vec();
        let beta = self.state.params["beta"].data().to_vec();
        match mode {
            Mode::Train => {
                if n < 2 {
                    return Err(Error::Domain(format!(
                        "batch variance is undefined for a training batch of {n}"
                    )));
                }
                let mut mean = vec![0.0; f];
                for row in x.data().chunks(f) {
                    for (m, &v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                for m in mean.iter_mut() {
                    *m /= n as f64;
                }
                let mut var = vec![0.0; f];
                for row in x.data().chunks(f) {
                    for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                        let d = v - m;
                        *s += d * d;
                    }
                }
                for s in var.iter_mut() {
                    *s /= n as f64;
                }
                let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + EPSILON).sqrt()).collect();

                let mut xhat = Tensor::zeros(&[n, f]);
                let mut out = Tensor::zeros(&[n, f]);
                for (i, row) in x.data().chunks(f).enumerate() {
                    for j in 0..f {
                        let h = (row[j] - mean[j]) * inv_std[j];
                        xhat.data_mut()[i * f + j] = h;
                        out.data_mut()[i * f + j] = gamma[j] * h + beta[j];
                    }
                }

                let rm = self.state.buffers.get_mut("running_mean").unwrap();
                for (r, &m) in rm.data_mut().iter_mut().zip(&mean) {
                    *r = MOMENTUM * *r + (1.0 - MOMENTUM) * m;
                }
                let rv = self.state.buffers.get_mut("running_var").unwrap();
                for (r, &v) in rv.data_mut().iter_mut().zip(&var) {
                    *r = MOMENTUM * *r + (1.0 - MOMENTUM) * v;
                }

                self.cache = Some(Cache { xhat, inv_std, n });
                Ok(out)
            }
            Mode::Infer => {
                let rm = self.state.buffers["running_mean"].data();
                let rv = self.state.buffers["running_var"].data();
                let mut out = Tensor::zeros(&[n, f]);
                for (i, row) in x.data().chunks(f).enumerate() {
                    for j in 0..f {
                        let h = (row[j] - rm[j]) / (rv[j] + EPSILON).sqrt();
                        out.data_mut()[i * f + j] = gamma[j] * h + beta[j];
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("batch norm backward without a training forward".into()))?;
        let (n, f) = (cache.n, self.f);
        if dy.shape() != [n, f] {
            return Err(Error::Dimension(format!(
                "batch norm backward expects [{n}, {f}], got {:?}",
                dy.shape()
            )));
        }
        let gamma = self.state.params["gamma"].data();

        let mut dgamma = vec![0.0; f];
        let mut dbeta = vec![0.0; f];
        let mut sum_dxhat = vec![0.0; f];
        let mut sum_dxhat_xhat = vec![0.0; f];
        for i in 0..n {
            for j in 0..f {
                let g = dy.data()[i * f + j];
                let h = cache.xhat.data()[i * f + j];
                dgamma[j] += g * h;
                dbeta[j] += g;
                let dxhat = g * gamma[j];
                sum_dxhat[j] += dxhat;
                sum_dxhat_xhat[j] += dxhat * h;
            }
        }

        let mut dx = Tensor::zeros(&[n, f]);
        let inv_n = 1.0 / n as f64;
        for i in 0..n {
            for j in 0..f {
                let dxhat = dy.data()[i * f + j] * gamma[j];
                let h = cache.xhat.data()[i * f + j];
                dx.data_mut()[i * f + j] = cache.inv_std[j]
                    * (dxhat - inv_n * sum_dxhat[j] - h * inv_n * sum_dxhat_xhat[j]);
            }
        }
        self.state
            .grads
            .insert("gamma".into(), Tensor::new(&[f], dgamma)?);
        self.state
            .grads
            .insert("beta".into(), Tensor::new(&[f], dbeta)?);
        Ok(dx)
    }
}
