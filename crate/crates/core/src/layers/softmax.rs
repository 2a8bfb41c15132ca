//! Softmax and the trainable softmax output layer.

use super::{he_uniform, LayerState, Mode};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{matmul, Tensor};

/// Row-wise softmax with max-subtraction for stability. Rows of the result
/// are positive and sum to 1.
pub fn softmax(x: &Tensor) -> Result<Tensor> {
    let [_, c] = match x.shape() {
        [n, c] => [*n, *c],
        s => {
            return Err(Error::Dimension(format!(
                "softmax expects [N, c], got {s:?}"
            )))
        }
    };
    if c < 2 {
        return Err(Error::Domain(format!(
            "softmax needs at least 2 classes, got {c}"
        )));
    }
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

/// Final classification layer: an affine map to `classes` logits followed
/// by softmax. No ReLU.
///
/// `backward` expects the gradient with respect to the *logits* (as
/// produced by the fused cross-entropy gradient), not with respect to the
/// probabilities.
pub struct SoftmaxOutput {
    pub nin: usize,
    pub classes: usize,
    pub state: LayerState,
    cache: Option<Tensor>,
}

impl SoftmaxOutput {
    pub fn new(nin: usize, classes: usize, rng: &mut Rng) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Spec(format!(
                "output layer needs at least 2 classes, got {classes}"
            )));
        }
        let mut state = LayerState::default();
        state
            .params
            .insert("weight".into(), he_uniform(&[nin, classes], nin, rng));
        state
            .params
            .insert("bias".into(), Tensor::zeros(&[classes]));
        Ok(SoftmaxOutput {
            nin,
            classes,
            state,
            cache: None,
        })
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        if x.rank() != 2 || x.shape()[1] != self.nin {
            return Err(Error::Dimension(format!(
                "output layer expects [N, {}], got {:?}",
                self.nin,
                x.shape()
            )));
        }
        let mut logits = matmul(x, &self.state.params["weight"])?;
        let bias = &self.state.params["bias"];
        for row in logits.data_mut().chunks_mut(self.classes) {
            for (v, &b) in row.iter_mut().zip(bias.data()) {
                *v += b;
            }
        }
        if mode == Mode::Train {
            self.cache = Some(x.clone());
        }
        softmax(&logits)
    }

    pub fn backward(&mut self, dlogits: &Tensor) -> Result<Tensor> {
        let x = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("output backward without a cached forward pass".into()))?;
        let dw = matmul(&x.transpose2()?, dlogits)?;
        let mut db = Tensor::zeros(&[self.classes]);
        for row in dlogits.data().chunks(self.classes) {
            for (g, &v) in db.data_mut().iter_mut().zip(row) {
                *g += v;
            }
        }
        let dx = matmul(dlogits, &self.state.params["weight"].transpose2()?)?;
        self.state.grads.insert("weight".into(), dw);
        self.state.grads.insert("bias".into(), db);
        Ok(dx)
    }
}
