//! Inverted dropout: train-time zeroing with survivor rescaling, identity
//! at inference.

use super::Mode;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub struct Dropout {
    pub p: f64,
    cache: Option<Tensor>,
}

impl Dropout {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Domain(format!(
                "dropout probability must be in [0, 1), got {p}"
            )));
        }
        Ok(Dropout { p, cache: None })
    }

    /// Train: each element is zeroed with probability `p` and survivors are
    /// scaled by `1/(1-p)`. Infer: identity, no draws consumed.
    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        match mode {
            Mode::Infer => Ok(x.clone()),
            Mode::Train => {
                if self.p == 0.0 {
                    self.cache = Some(Tensor::ones(x.shape()));
                    return Ok(x.clone());
                }
                let keep_scale = 1.0 / (1.0 - self.p);
                let mut mask = Tensor::zeros(x.shape());
                for m in mask.data_mut().iter_mut() {
                    if !rng.bernoulli(self.p) {
                        *m = keep_scale;
                    }
                }
                let out = x.mul(&mask)?;
                self.cache = Some(mask);
                Ok(out)
            }
        }
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let mask = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("dropout backward without a training forward".into()))?;
        dy.mul(mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_probability_is_identity_in_both_modes() {
        let mut rng = Rng::new(1, "drop");
        let mut d = Dropout::new(0.0).unwrap();
        let x = Tensor::uniform(&[3, 4], -1.0, 1.0, &mut rng);
        assert_eq!(d.forward(&x, Mode::Train, &mut rng).unwrap(), x);
        assert_eq!(d.forward(&x, Mode::Infer, &mut rng).unwrap(), x);
    }

    #[test]
    fn infer_mode_is_identity_at_any_probability() {
        let mut rng = Rng::new(2, "drop");
        let mut d = Dropout::new(0.3).unwrap();
        let x = Tensor::uniform(&[5, 5], -1.0, 1.0, &mut rng);
        assert_eq!(d.forward(&x, Mode::Infer, &mut rng).unwrap(), x);
    }

    #[test]
    fn expectation_is_preserved_at_scale() {
        // Law of large numbers on 10^6 ones: mean stays near 1.0 and the
        // zero fraction lands near p.
        let mut rng = Rng::new(3, "drop");
        let mut d = Dropout::new(0.3).unwrap();
        let x = Tensor::ones(&[1_000_000]);
        let y = d.forward(&x, Mode::Train, &mut rng).unwrap();
        let mean: f64 = y.data().iter().sum::<f64>() / 1e6;
        let zeros = y.data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e6;
        assert!((mean - 1.0).abs() < 1e-2, "mean {mean}");
        assert!((zeros - 0.3).abs() < 1e-2, "zero fraction {zeros}");
    }

    #[test]
    fn probability_one_is_rejected() {
        assert!(matches!(Dropout::new(1.0), Err(Error::Domain(_))));
        assert!(matches!(Dropout::new(1.5), Err(Error::Domain(_))));
    }
}
