//! Adam optimizer and categorical cross-entropy loss.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::collections::BTreeMap;

/// Adam with bias correction. Moment tensors are allocated lazily per
/// parameter key the first time that key is updated, mirroring the
/// parameter shapes exactly. `t` advances by one per [`AdamState::step`]
/// call, never per parameter.
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub t: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl AdamState {
    /// Defaults from the original Adam formulation: beta1 0.9, beta2 0.999,
    /// epsilon 1e-8.
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// Applies one optimization step to every `(key, param, grad)` entry:
    /// `m <- b1*m + (1-b1)*g`, `v <- b2*v + (1-b2)*g^2`,
    /// `theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step<'a, I>(&mut self, entries: I) -> Result<()>
    where
        I: IntoIterator<Item = (String, &'a mut Tensor, &'a Tensor)>,
    {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (key, param, grad) in entries {
            if param.shape() != grad.shape() {
                return Err(Error::Dimension(format!(
                    "adam: parameter '{key}' has shape {:?} but gradient {:?}",
                    param.shape(),
                    grad.shape()
                )));
            }
            let m = self
                .m
                .entry(key.clone())
                .or_insert_with(|| Tensor::zeros(param.shape()));
            let v = self
                .v
                .entry(key)
                .or_insert_with(|| Tensor::zeros(param.shape()));
            for ((p, g), (mi, vi)) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Categorical cross-entropy over softmax probabilities.
///
/// Returns the mean loss and the gradient with respect to the pre-softmax
/// logits, `(probs - labels) / N` — the softmax Jacobian is already folded
/// in, so the model's backward pass starts from this tensor directly.
/// Probabilities are clamped at 1e-12 before the log.
pub fn cross_entropy(probs: &Tensor, labels: &Tensor) -> Result<(f64, Tensor)> {
    let [n, c] = match probs.shape() {
        [n, c] => [*n, *c],
        s => {
            return Err(Error::Dimension(format!(
                "cross entropy expects [N, c] probabilities, got {s:?}"
            )))
        }
    };
    if labels.shape() != [n, c] {
        return Err(Error::Dimension(format!(
            "labels shaped {:?} do not match probabilities {:?}",
            labels.shape(),
            probs.shape()
        )));
    }
    let mut loss = 0.0;
    for (i, (prow, lrow)) in probs
        .data()
        .chunks(c)
        .zip(labels.data().chunks(c))
        .enumerate()
    {
        let sum: f64 = prow.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Domain(format!(
                "probability row {i} sums to {sum}, expected 1 within 1e-6"
            )));
        }
        let mut hot = None;
        for (j, &l) in lrow.iter().enumerate() {
            if l == 1.0 {
                if hot.is_some() {
                    return Err(Error::Domain(format!("label row {i} has multiple 1s")));
                }
                hot = Some(j);
            } else if l != 0.0 {
                return Err(Error::Domain(format!(
                    "label row {i} is not one-hot (value {l})"
                )));
            }
        }
        let hot = hot.ok_or_else(|| Error::Domain(format!("label row {i} has no 1")))?;
        loss -= prow[hot].max(1e-12).ln();
    }
    loss /= n as f64;
    let dlogits = probs.sub(labels)?.scale(1.0 / n as f64);
    Ok((loss, dlogits))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(rows: &[usize], c: usize) -> Tensor {
        let mut t = Tensor::zeros(&[rows.len(), c]);
        for (i, &j) in rows.iter().enumerate() {
            *t.at_mut(&[i, j]) = 1.0;
        }
        t
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let labels = one_hot(&[0, 2], 3);
        let (loss, _) = cross_entropy(&labels, &labels).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn uniform_probabilities_cost_ln3() {
        let probs = Tensor::filled(&[2, 3], 1.0 / 3.0);
        let labels = one_hot(&[1, 2], 3);
        let (loss, _) = cross_entropy(&probs, &labels).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn random_case_matches_direct_formula() {
        let mut rng = crate::rng::Rng::new(1, "ce");
        let logits = Tensor::uniform(&[5, 3], -2.0, 2.0, &mut rng);
        let probs = crate::layers::softmax(&logits).unwrap();
        let hot: Vec<usize> = (0..5).map(|_| rng.below(3)).collect();
        let labels = one_hot(&hot, 3);
        let (loss, dlogits) = cross_entropy(&probs, &labels).unwrap();
        // Direct -sum(y log p)/N oracle.
        let mut want = 0.0;
        for (i, &j) in hot.iter().enumerate() {
            want -= probs.at(&[i, j]).ln();
        }
        want /= 5.0;
        assert!((loss - want).abs() < 1e-12);
        // Gradient rows of the fused softmax-CE gradient sum to zero.
        for row in dlogits.data().chunks(3) {
            assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn loss_is_nonnegative_and_zero_only_when_exact() {
        let mut rng = crate::rng::Rng::new(2, "ce");
        for _ in 0..20 {
            let logits = Tensor::uniform(&[4, 3], -5.0, 5.0, &mut rng);
            let probs = crate::layers::softmax(&logits).unwrap();
            let labels = one_hot(&[0, 1, 2, 0], 3);
            let (loss, _) = cross_entropy(&probs, &labels).unwrap();
            assert!(loss > 0.0);
        }
    }

    #[test]
    fn invalid_probability_rows_are_rejected() {
        let probs = Tensor::new(&[1, 3], vec![0.5, 0.5, 0.5]).unwrap();
        let labels = one_hot(&[0], 3);
        assert!(matches!(
            cross_entropy(&probs, &labels),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut adam = AdamState::new(0.001);
        let mut theta = Tensor::new(&[2], vec![1.0, -2.0]).unwrap();
        let grad = Tensor::zeros(&[2]);
        adam.step([("theta".to_string(), &mut theta, &grad)])
            .unwrap();
        assert_eq!(theta.data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_matches_hand_expansion() {
        // theta=1, g=2: m=(1-b1)*2, v=(1-b2)*4, m_hat=2, v_hat=4,
        // theta' = 1 - lr * 2 / (2 + eps).
        let lr = 0.0001;
        let mut adam = AdamState::new(lr);
        let mut theta = Tensor::scalar(1.0);
        let grad = Tensor::scalar(2.0);
        adam.step([("t".to_string(), &mut theta, &grad)]).unwrap();
        let m: f64 = (1.0 - 0.9) * 2.0;
        let v: f64 = (1.0 - 0.999) * 4.0;
        let m_hat = m / (1.0 - 0.9);
        let v_hat: f64 = v / (1.0 - 0.999);
        let want = 1.0 - lr * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((theta.data()[0] - want).abs() < 1e-12);
        assert!((theta.data()[0] - (1.0 - lr)).abs() < 1e-6);
    }

    #[test]
    fn quadratic_descent_converges() {
        // 100 steps on f(theta) = theta^2 from theta=1 with lr=0.1. Adam
        // overshoots the minimum, so per-step |theta| is not monotone; the
        // maximum over each quarter of the run is, and the end lands well
        // inside 0.5.
        let mut adam = AdamState::new(0.1);
        let mut theta = Tensor::scalar(1.0);
        let mut traj = vec![1.0f64];
        for _ in 0..100 {
            let grad = Tensor::scalar(2.0 * theta.data()[0]);
            adam.step([("t".to_string(), &mut theta, &grad)]).unwrap();
            traj.push(theta.data()[0].abs());
        }
        let quarter_max: Vec<f64> = (0..4)
            .map(|q| traj[q * 25..(q + 1) * 25].iter().copied().fold(0.0, f64::max))
            .collect();
        assert!(quarter_max[1] < quarter_max[0]);
        assert!(quarter_max[2] < quarter_max[1]);
        assert!(quarter_max[3] < quarter_max[2]);
        assert!(traj[100] < 0.5, "|theta| at step 100 = {}", traj[100]);
    }

    #[test]
    fn parameter_deltas_are_linear_in_lr() {
        let grads: Vec<f64> = vec![0.3, -1.7, 0.04];
        let run = |lr: f64, steps: usize| -> Vec<f64> {
            let mut adam = AdamState::new(lr);
            // Starting at zero makes the accumulated delta directly
            // observable without subtraction rounding.
            let mut theta = Tensor::zeros(&[3]);
            let g = Tensor::new(&[3], grads.clone()).unwrap();
            for _ in 0..steps {
                adam.step([("t".to_string(), &mut theta, &g)]).unwrap();
            }
            theta.data().to_vec()
        };
        // From a given state, doubling lr doubles the step exactly: the
        // moment quotient is lr-independent and scaling by 2 is lossless.
        let base = run(0.01, 1);
        let doubled = run(0.02, 1);
        for (b, d) in base.iter().zip(&doubled) {
            assert_eq!(*d, 2.0 * b);
        }
        // Across accumulated steps the relation holds to rounding.
        let base = run(0.01, 3);
        let doubled = run(0.02, 3);
        for (b, d) in base.iter().zip(&doubled) {
            assert!((d - 2.0 * b).abs() < 1e-13);
        }
    }

    #[test]
    fn shape_mismatch_is_a_dimension_error() {
        let mut adam = AdamState::new(0.1);
        let mut theta = Tensor::zeros(&[2]);
        let grad = Tensor::zeros(&[3]);
        assert!(matches!(
            adam.step([("t".to_string(), &mut theta, &grad)]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn step_counter_advances_once_per_step() {
        let mut adam = AdamState::new(0.1);
        let mut a = Tensor::scalar(1.0);
        let mut b = Tensor::scalar(1.0);
        let g = Tensor::scalar(1.0);
        adam.step([
            ("a".to_string(), &mut a, &g),
            ("b".to_string(), &mut b, &g),
        ])
        .unwrap();
        assert_eq!(adam.t, 1);
    }
}
