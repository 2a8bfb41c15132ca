//! Fully connected layer with fused ReLU.

use super::{he_uniform, LayerState, Mode};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{matmul, Tensor};

/// `[N,f] -> [N,n]`, `ReLU(xW + b)` with `W` shaped `[f, n]`.
pub struct Dense {
    pub nin: usize,
    pub nout: usize,
    pub state: LayerState,
    cache: Option<Cache>,
}

struct Cache {
    x: Tensor,
    mask: Tensor,
}

impl Dense {
    pub fn new(nin: usize, nout: usize, rng: &mut Rng) -> Self {
        let mut state = LayerState::default();
        state
            .params
            .insert("weight".into(), he_uniform(&[nin, nout], nin, rng));
        state.params.insert("bias".into(), Tensor::zeros(&[nout]));
        Dense {
            nin,
            nout,
            state,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        if x.rank() != 2 || x.shape()[1] != self.nin {
            return Err(Error::Dimension(format!(
                "dense expects [N, {}], got {:?}",
                self.nin,
                x.shape()
            )));
        }
        let z = matmul(x, &self.state.params["weight"])?;
        let bias = &self.state.params["bias"];
        let mut out = z;
        for row in out.data_mut().chunks_mut(self.nout) {
            for (v, &b) in row.iter_mut().zip(bias.data()) {
                let a = *v + b;
                *v = if a > 0.0 { a } else { 0.0 };
            }
        }
        if mode == Mode::Train {
            let mask = out.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
            self.cache = Some(Cache { x: x.clone(), mask });
        }
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("dense backward without a cached forward pass".into()))?;
        let dym = dy.mul(&cache.mask)?;
        let dw = matmul(&cache.x.transpose2()?, &dym)?;
        let mut db = Tensor::zeros(&[self.nout]);
        for row in dym.data().chunks(self.nout) {
            for (g, &v) in db.data_mut().iter_mut().zip(row) {
                *g += v;
            }
        }
        let dx = matmul(&dym, &self.state.params["weight"].transpose2()?)?;
        self.state.grads.insert("weight".into(), dw);
        self.state.grads.insert("bias".into(), db);
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_yields_relu_of_bias() {
        let mut rng = Rng::new(1, "dense");
        let mut dense = Dense::new(3, 2, &mut rng);
        dense
            .state
            .params
            .insert("bias".into(), Tensor::new(&[2], vec![0.5, -0.5]).unwrap());
        let x = Tensor::zeros(&[1, 3]);
        let y = dense.forward(&x, Mode::Infer).unwrap();
        assert_eq!(y.data(), &[0.5, 0.0]);
    }

    #[test]
    fn identity_weight_passes_nonnegative_input_through() {
        let mut rng = Rng::new(2, "dense");
        let mut dense = Dense::new(3, 3, &mut rng);
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            *eye.at_mut(&[i, i]) = 1.0;
        }
        dense.state.params.insert("weight".into(), eye);
        let x = Tensor::uniform(&[2, 3], 0.0, 1.0, &mut rng);
        let y = dense.forward(&x, Mode::Infer).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn forward_matches_matmul_plus_clamp() {
        let mut rng = Rng::new(3, "dense");
        let mut dense = Dense::new(4, 3, &mut rng);
        let x = Tensor::uniform(&[5, 4], -1.0, 1.0, &mut rng);
        let y = dense.forward(&x, Mode::Infer).unwrap();
        let z = matmul(&x, &dense.state.params["weight"]).unwrap();
        for i in 0..5 {
            for j in 0..3 {
                let want = (z.at(&[i, j]) + dense.state.params["bias"].data()[j]).max(0.0);
                assert!((y.at(&[i, j]) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn feature_mismatch_is_a_dimension_error() {
        let mut rng = Rng::new(4, "dense");
        let mut dense = Dense::new(4, 3, &mut rng);
        let x = Tensor::zeros(&[2, 5]);
        assert!(matches!(
            dense.forward(&x, Mode::Infer),
            Err(Error::Dimension(_))
        ));
    }
}
