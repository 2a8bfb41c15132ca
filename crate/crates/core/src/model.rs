//! Runnable models built from architecture specs.
//!
//! A [`Model`] owns an ordered list of named layers. `forward` threads the
//! batch through every layer; `backward` starts from the gradient with
//! respect to the output logits (the fused cross-entropy gradient) and
//! walks the layers in reverse, leaving per-parameter gradients in each
//! layer's state.

use crate::arch::{infer_shapes, ArchitectureSpec, LayerKind};
use crate::error::{Error, Result};
use crate::layers::{
    BatchNorm, Conv2d, Dense, Dropout, Flatten, LayerState, MaxPool, Mode, SoftmaxOutput,
};
use crate::rng::Rng;
use crate::tensor::{read_tensor, write_tensor, Tensor};
use std::io::{Read, Write};

pub enum Layer {
    Conv(Conv2d),
    Pool(MaxPool),
    Flatten(Flatten),
    Dense(Dense),
    Norm(BatchNorm),
    Drop(Dropout),
    Output(SoftmaxOutput),
}

impl Layer {
    fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        match self {
            Layer::Conv(l) => l.forward(x, mode),
            Layer::Pool(l) => l.forward(x, mode),
            Layer::Flatten(l) => l.forward(x, mode),
            Layer::Dense(l) => l.forward(x, mode),
            Layer::Norm(l) => l.forward(x, mode),
            Layer::Drop(l) => l.forward(x, mode, rng),
            Layer::Output(l) => l.forward(x, mode),
        }
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv(l) => l.backward(dy),
            Layer::Pool(l) => l.backward(dy),
            Layer::Flatten(l) => l.backward(dy),
            Layer::Dense(l) => l.backward(dy),
            Layer::Norm(l) => l.backward(dy),
            Layer::Drop(l) => l.backward(dy),
            Layer::Output(l) => l.backward(dy),
        }
    }

    pub fn state(&self) -> Option<&LayerState> {
        match self {
            Layer::Conv(l) => Some(&l.state),
            Layer::Dense(l) => Some(&l.state),
            Layer::Norm(l) => Some(&l.state),
            Layer::Output(l) => Some(&l.state),
            _ => None,
        }
    }

    pub fn state_mut(&mut self) -> Option<&mut LayerState> {
        match self {
            Layer::Conv(l) => Some(&mut l.state),
            Layer::Dense(l) => Some(&mut l.state),
            Layer::Norm(l) => Some(&mut l.state),
            Layer::Output(l) => Some(&mut l.state),
            _ => None,
        }
    }
}

pub struct NamedLayer {
    pub name: String,
    pub layer: Layer,
}

pub struct Model {
    pub input: (usize, usize, usize),
    pub layers: Vec<NamedLayer>,
}

/// Initializes every layer per the init policy (He-uniform weights, zero
/// biases, gamma 1 / beta 0, running mean 0 / var 1) on per-layer streams
/// derived from `rng`.
pub fn build(spec: &ArchitectureSpec, rng: &Rng) -> Result<Model> {
    spec.validate()?;
    let shapes = infer_shapes(spec)?;
    let (h, w, c) = spec.input;
    let mut in_shape = vec![h, w, c];
    let mut layers = Vec::with_capacity(spec.layers.len());
    for (ls, out_shape) in spec.layers.iter().zip(&shapes) {
        let mut init_rng = rng.derive(&format!("init/{}", ls.name));
        let layer = match &ls.kind {
            LayerKind::Conv2d { k, channels } => {
                let cin = *in_shape.last().unwrap();
                Layer::Conv(Conv2d::new(*k, cin, *channels, &mut init_rng)?)
            }
            LayerKind::MaxPool { d, s } => Layer::Pool(MaxPool::new(*d, *s)?),
            LayerKind::Flatten => Layer::Flatten(Flatten::new()),
            LayerKind::Dense { units } => Layer::Dense(Dense::new(in_shape[0], *units, &mut init_rng)),
            LayerKind::BatchNorm => Layer::Norm(BatchNorm::new(in_shape[0])),
            LayerKind::Dropout { p } => Layer::Drop(Dropout::new(*p)?),
            LayerKind::SoftmaxOutput { classes } => {
                Layer::Output(SoftmaxOutput::new(in_shape[0], *classes, &mut init_rng)?)
            }
        };
        layers.push(NamedLayer {
            name: ls.name.clone(),
            layer,
        });
        in_shape = out_shape.clone();
    }
    Ok(Model {
        input: spec.input,
        layers,
    })
}

impl Model {
    /// `[N, H, W, C] -> [N, classes]` probability rows. Inference passes
    /// consume no randomness and cache nothing.
    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        let (h, w, c) = self.input;
        match x.shape() {
            [_, xh, xw, xc] if (*xh, *xw, *xc) == (h, w, c) => {}
            s => {
                return Err(Error::Dimension(format!(
                    "model expects [N, {h}, {w}, {c}] input, got {s:?}"
                )))
            }
        }
        let mut cur = x.clone();
        for (i, nl) in self.layers.iter_mut().enumerate() {
            let mut layer_rng = rng.derive(&format!("layer{i}"));
            cur = nl.layer.forward(&cur, mode, &mut layer_rng)?;
        }
        Ok(cur)
    }

    /// Walks the layers in reverse from the logits gradient, filling each
    /// trainable layer's gradient map. Returns the input gradient.
    pub fn backward(&mut self, dlogits: &Tensor) -> Result<Tensor> {
        let mut cur = dlogits.clone();
        for nl in self.layers.iter_mut().rev() {
            cur = nl.layer.backward(&cur)?;
        }
        Ok(cur)
    }

    /// `(key, parameter, gradient)` entries in layer order for the
    /// optimizer. Layers that have not produced gradients yet are skipped.
    pub fn adam_entries(&mut self) -> Vec<(String, &mut Tensor, &Tensor)> {
        let mut out = Vec::new();
        for nl in self.layers.iter_mut() {
            if let Some(state) = nl.layer.state_mut() {
                let LayerState { params, grads, .. } = state;
                for (pname, param) in params.iter_mut() {
                    if let Some(grad) = grads.get(pname) {
                        out.push((format!("{}/{}", nl.name, pname), param, grad));
                    }
                }
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|nl| nl.layer.state())
            .map(|s| s.params.values().map(Tensor::len).sum::<usize>())
            .sum()
    }

    /// Checkpoint: `u64` record count, then per record a length-prefixed
    /// layer name, length-prefixed parameter name, and a tensor dump.
    /// Records cover parameters and buffers in layer order, names sorted
    /// within each layer.
    pub fn save_checkpoint<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut records: Vec<(&str, &str, &Tensor)> = Vec::new();
        for nl in &self.layers {
            if let Some(state) = nl.layer.state() {
                for (pname, t) in state.params.iter().chain(state.buffers.iter()) {
                    records.push((&nl.name, pname, t));
                }
            }
        }
        w.write_all(&(records.len() as u64).to_le_bytes())?;
        for (layer, pname, t) in records {
            for s in [layer, pname] {
                let bytes = s.as_bytes();
                w.write_all(&(bytes.len() as u32).to_le_bytes())?;
                w.write_all(bytes)?;
            }
            write_tensor(w, t)?;
        }
        Ok(())
    }

    pub fn checkpoint_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.save_checkpoint(&mut buf)?;
        Ok(buf)
    }

    /// Loads a checkpoint into this model; every record must match an
    /// existing parameter or buffer of the same shape.
    pub fn load_checkpoint<R: Read>(&mut self, r: &mut R) -> Result<()> {
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8);
        for _ in 0..count {
            let layer_name = read_string(r)?;
            let pname = read_string(r)?;
            let tensor = read_tensor(r)?;
            let nl = self
                .layers
                .iter_mut()
                .find(|nl| nl.name == layer_name)
                .ok_or_else(|| {
                    Error::State(format!("checkpoint names unknown layer '{layer_name}'"))
                })?;
            let state = nl.layer.state_mut().ok_or_else(|| {
                Error::State(format!("checkpoint targets parameterless layer '{layer_name}'"))
            })?;
            let slot = state
                .params
                .get_mut(&pname)
                .or_else(|| state.buffers.get_mut(&pname))
                .ok_or_else(|| {
                    Error::State(format!("layer '{layer_name}' has no parameter '{pname}'"))
                })?;
            if slot.shape() != tensor.shape() {
                return Err(Error::Dimension(format!(
                    "checkpoint tensor for '{layer_name}/{pname}' is {:?}, model expects {:?}",
                    tensor.shape(),
                    slot.shape()
                )));
            }
            *slot = tensor;
        }
        Ok(())
    }
}

fn read_string<R: Read>(r: &mut R) -> Result<String> {
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let len = u32::from_le_bytes(b4) as usize;
    if len > 4096 {
        return Err(Error::State(format!(
            "checkpoint string length {len} exceeds limit"
        )));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::State(format!("checkpoint string not UTF-8: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::mini_vgg_spec;
    use crate::optim::cross_entropy;

    fn tiny_spec() -> ArchitectureSpec {
        use crate::arch::LayerSpec;
        ArchitectureSpec {
            input: (6, 6, 2),
            layers: vec![
                LayerSpec {
                    name: "conv".into(),
                    kind: LayerKind::Conv2d { k: 3, channels: 3 },
                },
                LayerSpec {
                    name: "pool".into(),
                    kind: LayerKind::MaxPool { d: 2, s: 2 },
                },
                LayerSpec {
                    name: "flat".into(),
                    kind: LayerKind::Flatten,
                },
                LayerSpec {
                    name: "out".into(),
                    kind: LayerKind::SoftmaxOutput { classes: 3 },
                },
            ],
        }
    }

    #[test]
    fn forward_rows_are_probabilities() {
        let rng = Rng::new(1, "model");
        let mut model = build(&mini_vgg_spec(3, 0.3, (16, 16, 3)), &rng).unwrap();
        let mut frng = rng.derive("fwd");
        let x = Tensor::uniform(&[2, 16, 16, 3], 0.0, 1.0, &mut rng.derive("x"));
        let probs = model.forward(&x, Mode::Infer, &mut frng).unwrap();
        assert_eq!(probs.shape(), &[2, 3]);
        for row in probs.data().chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn inference_is_deterministic_and_repeatable() {
        let rng = Rng::new(2, "model");
        let mut model = build(&tiny_spec(), &rng).unwrap();
        let x = Tensor::uniform(&[3, 6, 6, 2], -1.0, 1.0, &mut rng.derive("x"));
        let a = model
            .forward(&x, Mode::Infer, &mut rng.derive("f1"))
            .unwrap();
        let b = model
            .forward(&x, Mode::Infer, &mut rng.derive("f2"))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        // Central differences on ten sampled weights of a three-layer model,
        // through the fused softmax + cross-entropy path.
        let rng = Rng::new(3, "model");
        let mut model = build(&tiny_spec(), &rng).unwrap();
        let x = Tensor::uniform(&[2, 6, 6, 2], -1.0, 1.0, &mut rng.derive("x"));
        let mut labels = Tensor::zeros(&[2, 3]);
        *labels.at_mut(&[0, 1]) = 1.0;
        *labels.at_mut(&[1, 2]) = 1.0;

        let mut frng = rng.derive("fwd");
        let probs = model.forward(&x, Mode::Train, &mut frng).unwrap();
        let (_, dlogits) = cross_entropy(&probs, &labels).unwrap();
        model.backward(&dlogits).unwrap();

        let mut pick = rng.derive("pick");
        for case in 0..10 {
            let layer_idx = [0usize, 3][pick.below(2)]; // conv or output
            let (layer_name, pname) = {
                let nl = &model.layers[layer_idx];
                let state = nl.layer.state().unwrap();
                let names: Vec<&String> = state.params.keys().collect();
                (
                    nl.name.clone(),
                    names[pick.below(names.len())].clone(),
                )
            };
            let state = model.layers[layer_idx].layer.state().unwrap();
            let len = state.params[&pname].len();
            let elem = pick.below(len);
            let analytic = state.grads[&pname].data()[elem];

            let eps = 1e-5;
            let loss_at = |delta: f64, model: &mut Model| -> f64 {
                {
                    let state = model.layers[layer_idx].layer.state_mut().unwrap();
                    state.params.get_mut(&pname).unwrap().data_mut()[elem] += delta;
                }
                let mut r = rng.derive("fd");
                let probs = model.forward(&x, Mode::Train, &mut r).unwrap();
                let (loss, _) = cross_entropy(&probs, &labels).unwrap();
                {
                    let state = model.layers[layer_idx].layer.state_mut().unwrap();
                    state.params.get_mut(&pname).unwrap().data_mut()[elem] -= delta;
                }
                loss
            };
            let numeric =
                (loss_at(eps, &mut model) - loss_at(-eps, &mut model)) / (2.0 * eps);
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            let rel = (analytic - numeric).abs() / denom;
            assert!(
                rel < 1e-4,
                "case {case} {layer_name}/{pname}[{elem}]: analytic {analytic}, numeric {numeric}"
            );
        }
    }

    #[test]
    fn checkpoint_round_trips_bitwise() {
        let rng = Rng::new(4, "model");
        let mut model = build(&tiny_spec(), &rng).unwrap();
        let bytes = model.checkpoint_bytes().unwrap();
        // Scramble, then restore.
        let other_rng = Rng::new(99, "other");
        let mut other = build(&tiny_spec(), &other_rng).unwrap();
        assert_ne!(other.checkpoint_bytes().unwrap(), bytes);
        other.load_checkpoint(&mut &bytes[..]).unwrap();
        assert_eq!(other.checkpoint_bytes().unwrap(), bytes);
        // And the restored model computes identically.
        let x = Tensor::uniform(&[1, 6, 6, 2], 0.0, 1.0, &mut rng.derive("x"));
        let a = model
            .forward(&x, Mode::Infer, &mut rng.derive("f"))
            .unwrap();
        let b = other
            .forward(&x, Mode::Infer, &mut rng.derive("f"))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identical_seeds_build_identical_models() {
        let a = build(&tiny_spec(), &Rng::new(5, "model")).unwrap();
        let b = build(&tiny_spec(), &Rng::new(5, "model")).unwrap();
        assert_eq!(
            a.checkpoint_bytes().unwrap(),
            b.checkpoint_bytes().unwrap()
        );
    }
}
