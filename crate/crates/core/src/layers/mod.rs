//! Forward and backward passes for every layer the VGG-style networks use.
//!
//! Layers own their parameters through [`LayerState`]: a named map of
//! trainable tensors, a named map of non-trainable buffers (batch-norm
//! running statistics), and per-layer gradients written by `backward`.
//! Activation caches are kept privately by each layer and only in `Train`
//! mode, so inference passes never mutate anything that reaches a
//! checkpoint.
//!
//! ReLU is fused into the convolution and dense layers; softmax applies
//! only at the output.

mod conv;
mod dense;
mod drop;
mod norm;
mod pool;
mod softmax;

pub use conv::Conv2d;
pub use dense::Dense;
pub use drop::Dropout;
pub use norm::BatchNorm;
pub use pool::{Flatten, MaxPool};
pub use softmax::{softmax, SoftmaxOutput};

use crate::rng::Rng;
use crate::tensor::Tensor;
use std::collections::BTreeMap;

/// Whether a pass is part of training or inference. Dropout and batch-norm
/// switch behavior on this; every other layer ignores it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Named parameter store for one layer.
///
/// `params` exist only on trainable layers (conv, dense, batch-norm);
/// `buffers` exist only on batch-norm and are excluded from gradient
/// updates. Map iteration order is the sorted name order, which fixes the
/// parameter traversal order everywhere (optimizer, checkpoints).
#[derive(Clone, Debug, Default)]
pub struct LayerState {
    pub params: BTreeMap<String, Tensor>,
    pub buffers: BTreeMap<String, Tensor>,
    pub grads: BTreeMap<String, Tensor>,
}

/// He-uniform initialization: `U[-sqrt(6/fan_in), sqrt(6/fan_in))`.
pub fn he_uniform(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor {
    let limit = (6.0 / fan_in as f64).sqrt();
    Tensor::uniform(shape, -limit, limit, rng)
}
