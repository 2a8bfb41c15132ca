//! 2D convolution with fused ReLU, implemented as im2col + matmul.

use super::{he_uniform, LayerState, Mode};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{col2im, im2col, matmul, Tensor};

/// `k×k` convolution, stride 1, same padding, ReLU fused into the output.
///
/// Weights are shaped `[k, k, Cin, Cout]`; the bias is `[Cout]`. Same
/// padding requires an odd kernel so the spatial extent is preserved.
pub struct Conv2d {
    pub k: usize,
    pub cin: usize,
    pub cout: usize,
    pub state: LayerState,
    cache: Option<Cache>,
}

struct Cache {
    x: Tensor,
    /// 1.0 where the pre-activation was positive, else 0.0.
    mask: Tensor,
}

impl Conv2d {
    pub fn new(k: usize, cin: usize, cout: usize, rng: &mut Rng) -> Result<Self> {
        if k % 2 == 0 || k == 0 {
            return Err(Error::Spec(format!(
                "same-padding convolution requires an odd kernel, got {k}"
            )));
        }
        let mut state = LayerState::default();
        state.params.insert(
            "weight".into(),
            he_uniform(&[k, k, cin, cout], k * k * cin, rng),
        );
        state.params.insert("bias".into(), Tensor::zeros(&[cout]));
        Ok(Conv2d {
            k,
            cin,
            cout,
            state,
            cache: None,
        })
    }

    fn pad(&self) -> usize {
        (self.k - 1) / 2
    }

    /// `[N,H,W,Cin] -> [N,H,W,Cout]`, `ReLU(conv(x, W) + b)`.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let [n, h, w, cin] = batch_shape(x)?;
        if cin != self.cin {
            return Err(Error::Dimension(format!(
                "conv expects {} input channels, input has shape {:?}",
                self.cin,
                x.shape()
            )));
        }
        let weight = &self.state.params["weight"];
        let bias = &self.state.params["bias"];
        let w2 = weight.reshape(&[self.k * self.k * self.cin, self.cout])?;

        let mut out = Tensor::zeros(&[n, h, w, self.cout]);
        let plane = h * w;
        for img in 0..n {
            let xi = image_slice(x, img)?;
            let cols = im2col(&xi, self.k, self.pad(), 1)?;
            let y = matmul(&cols, &w2)?;
            let dst = &mut out.data_mut()[img * plane * self.cout..(img + 1) * plane * self.cout];
            for (p, row) in y.data().chunks(self.cout).enumerate() {
                for (c, &v) in row.iter().enumerate() {
                    let a = v + bias.data()[c];
                    dst[p * self.cout + c] = if a > 0.0 { a } else { 0.0 };
                }
            }
        }
        if mode == Mode::Train {
            let mask = out.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
            self.cache = Some(Cache { x: x.clone(), mask });
        }
        Ok(out)
    }

    /// Returns `dx`; writes `dW` and `db` into the gradient map.
    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("conv backward without a cached forward pass".into()))?;
        let dym = dy.mul(&cache.mask)?;
        let [n, h, w, _] = batch_shape(&dym)?;
        let plane = h * w;
        let weight = &self.state.params["weight"];
        let w2 = weight.reshape(&[self.k * self.k * self.cin, self.cout])?;
        let w2t = w2.transpose2()?;

        let mut dw2 = Tensor::zeros(&[self.k * self.k * self.cin, self.cout]);
        let mut db = Tensor::zeros(&[self.cout]);
        let mut dx = Tensor::zeros(cache.x.shape());
        for img in 0..n {
            let dyi = Tensor::new(
                &[plane, self.cout],
                dym.data()[img * plane * self.cout..(img + 1) * plane * self.cout].to_vec(),
            )?;
            for row in dyi.data().chunks(self.cout) {
                for (c, &v) in row.iter().enumerate() {
                    db.data_mut()[c] += v;
                }
            }
            let xi = image_slice(&cache.x, img)?;
            let cols = im2col(&xi, self.k, self.pad(), 1)?;
            let contrib = matmul(&cols.transpose2()?, &dyi)?;
            dw2 = dw2.add(&contrib)?;
            let dcols = matmul(&dyi, &w2t)?;
            let dxi = col2im(&dcols, h, w, self.cin, self.k, self.pad(), 1)?;
            let dst = &mut dx.data_mut()[img * plane * self.cin..(img + 1) * plane * self.cin];
            dst.copy_from_slice(dxi.data());
        }
        self.state
            .grads
            .insert("weight".into(), dw2.reshape(weight.shape())?);
        self.state.grads.insert("bias".into(), db);
        Ok(dx)
    }
}

fn batch_shape(x: &Tensor) -> Result<[usize; 4]> {
    match x.shape() {
        [n, h, w, c] => Ok([*n, *h, *w, *c]),
        s => Err(Error::Dimension(format!(
            "expected [N, H, W, C] input, got {s:?}"
        ))),
    }
}

fn image_slice(x: &Tensor, img: usize) -> Result<Tensor> {
    let [_, h, w, c] = batch_shape(x)?;
    let plane = h * w * c;
    Tensor::new(&[h, w, c], x.data()[img * plane..(img + 1) * plane].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Nested-loop same-padding convolution + bias + ReLU, used as the oracle.
    pub(crate) fn direct_conv_relu(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
        let (n, h, ww, cin) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (k, cout) = (w.shape()[0], w.shape()[3]);
        let pad = (k - 1) / 2;
        let mut out = Tensor::zeros(&[n, h, ww, cout]);
        for img in 0..n {
            for oh in 0..h {
                for ow in 0..ww {
                    for co in 0..cout {
                        let mut acc = b.data()[co];
                        for ki in 0..k {
                            for kj in 0..k {
                                let ih = oh as isize + ki as isize - pad as isize;
                                let iw = ow as isize + kj as isize - pad as isize;
                                if ih < 0 || iw < 0 || ih >= h as isize || iw >= ww as isize {
                                    continue;
                                }
                                for ci in 0..cin {
                                    acc += x.at(&[img, ih as usize, iw as usize, ci])
                                        * w.at(&[ki, kj, ci, co]);
                                }
                            }
                        }
                        *out.at_mut(&[img, oh, ow, co]) = acc.max(0.0);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn zero_input_propagates_zeros() {
        let mut rng = Rng::new(1, "conv");
        let mut conv = Conv2d::new(3, 1, 2, &mut rng).unwrap();
        let x = Tensor::zeros(&[1, 5, 5, 1]);
        let y = conv.forward(&x, Mode::Infer).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_passes_nonnegative_input_through() {
        let mut rng = Rng::new(2, "conv");
        let mut conv = Conv2d::new(3, 1, 1, &mut rng).unwrap();
        let mut w = Tensor::zeros(&[3, 3, 1, 1]);
        *w.at_mut(&[1, 1, 0, 0]) = 1.0;
        conv.state.params.insert("weight".into(), w);
        let x = Tensor::uniform(&[1, 4, 4, 1], 0.0, 1.0, &mut rng);
        let y = conv.forward(&x, Mode::Infer).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn forward_matches_nested_loop_oracle() {
        let mut rng = Rng::new(3, "conv");
        let mut conv = Conv2d::new(3, 2, 4, &mut rng).unwrap();
        let x = Tensor::uniform(&[1, 6, 6, 2], -1.0, 1.0, &mut rng);
        let got = conv.forward(&x, Mode::Infer).unwrap();
        let want = direct_conv_relu(
            &x,
            &conv.state.params["weight"],
            &conv.state.params["bias"],
        );
        let diff = got
            .data()
            .iter()
            .zip(want.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-10, "max diff {diff}");
    }

    #[test]
    fn channel_mismatch_is_a_dimension_error() {
        let mut rng = Rng::new(4, "conv");
        let mut conv = Conv2d::new(3, 3, 4, &mut rng).unwrap();
        let x = Tensor::zeros(&[1, 5, 5, 2]);
        assert!(matches!(
            conv.forward(&x, Mode::Infer),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let mut rng = Rng::new(5, "conv");
        let mut conv = Conv2d::new(3, 1, 2, &mut rng).unwrap();
        let x = Tensor::uniform(&[1, 4, 4, 1], -1.0, 1.0, &mut rng);
        let y = conv.forward(&x, Mode::Train).unwrap();
        let dy = Tensor::zeros(y.shape());
        let dx = conv.backward(&dy).unwrap();
        assert!(dx.data().iter().all(|&v| v == 0.0));
        assert!(conv.state.grads["weight"].data().iter().all(|&v| v == 0.0));
        assert!(conv.state.grads["bias"].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pixel_1x1_kernel_weight_grad_is_scalar_chain_rule() {
        let mut rng = Rng::new(6, "conv");
        let mut conv = Conv2d::new(1, 1, 1, &mut rng).unwrap();
        conv.state
            .params
            .insert("weight".into(), Tensor::new(&[1, 1, 1, 1], vec![2.0]).unwrap());
        let x = Tensor::new(&[1, 1, 1, 1], vec![3.0]).unwrap();
        conv.forward(&x, Mode::Train).unwrap();
        let dy = Tensor::new(&[1, 1, 1, 1], vec![5.0]).unwrap();
        conv.backward(&dy).unwrap();
        // y = relu(w*x) with w*x > 0, so dW = x * dy.
        assert_eq!(conv.state.grads["weight"].data()[0], 15.0);
        assert_eq!(conv.state.grads["bias"].data()[0], 5.0);
    }

    #[test]
    fn backward_without_forward_is_a_state_error() {
        let mut rng = Rng::new(7, "conv");
        let mut conv = Conv2d::new(3, 1, 1, &mut rng).unwrap();
        let dy = Tensor::zeros(&[1, 4, 4, 1]);
        assert!(matches!(conv.backward(&dy), Err(Error::State(_))));
    }
}
