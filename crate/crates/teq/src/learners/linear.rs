//! Logistic regression trained by full-batch gradient descent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bce, central_differences, gradient_rel_error, sigmoid, LrParams};
use crate::matrix::DenseMatrix;
use crate::num::Scalar;
use crate::util::dot;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct LinearModel<S> {
    pub weights: Vec<S>,
    pub bias: S,
}

impl<S: Scalar> LinearModel<S> {
    pub fn predict_row(&self, row: &[S]) -> S {
        sigmoid(self.bias + dot(&self.weights, row))
    }
}

const CHUNK_ROWS: usize = 2048;

/// Mean data gradient and loss at the current parameters. Rows are folded in
/// fixed chunk order, so the result does not depend on thread scheduling.
fn grad_and_loss<S: Scalar>(
    x: &DenseMatrix<S>,
    y: &[bool],
    weights: &[S],
    bias: S,
) -> (Vec<S>, S, f64) {
    let d = x.cols();
    let chunks: Vec<(Vec<S>, S, f64)> = (0..x.rows())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK_ROWS)
        .map(|rows| {
            let mut grad_w = vec![S::zero(); d];
            let mut grad_b = S::zero();
            let mut loss = 0.0f64;
            for &i in rows {
                let row = x.row(i);
                let p = sigmoid(bias + dot(weights, row));
                let target = if y[i] { S::one() } else { S::zero() };
                let delta = p - target;
                for (g, v) in grad_w.iter_mut().zip(row) {
                    *g += delta * *v;
                }
                grad_b += delta;
                loss += bce(p.as_f64(), y[i]);
            }
            (grad_w, grad_b, loss)
        })
        .collect();
    let mut grad_w = vec![S::zero(); d];
    let mut grad_b = S::zero();
    let mut loss = 0.0f64;
    for (gw, gb, l) in chunks {
        for (acc, g) in grad_w.iter_mut().zip(gw) {
            *acc += g;
        }
        grad_b += gb;
        loss += l;
    }
    let inv_n = S::of(1.0 / x.rows() as f64);
    for g in grad_w.iter_mut() {
        *g *= inv_n;
    }
    (grad_w, grad_b * inv_n, loss / x.rows() as f64)
}

/// Full-batch gradient descent on the L2-regularized logistic loss. Returns
/// the model and the monitored training loss per epoch (with the final loss
/// appended).
pub(crate) fn train_lr<S: Scalar>(
    x: &DenseMatrix<S>,
    y: &[bool],
    params: &LrParams,
) -> (LinearModel<S>, Vec<f64>) {
    let d = x.cols();
    let mut weights = vec![S::zero(); d];
    let mut bias = S::zero();
    let lr = S::of(params.learning_rate);
    let lambda = S::of(params.l2);
    let mut losses = Vec::with_capacity(params.epochs + 1);
    for _ in 0..params.epochs {
        let (grad_w, grad_b, data_loss) = grad_and_loss(x, y, &weights, bias);
        let reg: S = weights.iter().map(|w| *w * *w).sum();
        losses.push(data_loss + params.l2 / 2.0 * reg.as_f64());
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= lr * (*g + lambda * *w);
        }
        bias -= lr * grad_b;
    }
    let (_, _, data_loss) = grad_and_loss(x, y, &weights, bias);
    let reg: S = weights.iter().map(|w| *w * *w).sum();
    losses.push(data_loss + params.l2 / 2.0 * reg.as_f64());
    (LinearModel { weights, bias }, losses)
}

/// Analytic gradient of the regularized logistic loss for one point, as
/// `(loss, grad)` over the flattened `[weights.., bias]` parameter vector.
fn lr_loss_grad(theta: &[f64], x: &[f64], y: bool, l2: f64) -> (f64, Vec<f64>) {
    let d = x.len();
    let (weights, bias) = (&theta[..d], theta[d]);
    let z = bias + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
    let p = 1.0 / (1.0 + (-z).exp());
    let target = if y { 1.0 } else { 0.0 };
    let mut grad = Vec::with_capacity(d + 1);
    for (w, v) in weights.iter().zip(x) {
        grad.push((p - target) * v + l2 * w);
    }
    grad.push(p - target);
    let loss = bce(p, y) + l2 / 2.0 * weights.iter().map(|w| w * w).sum::<f64>();
    (loss, grad)
}

/// Finite-difference check of the logistic-loss gradient at a random
/// parameter/input point. Returns the relative error.
pub(crate) fn gradient_check_lr(dim: usize, l2: f64, seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let theta: Vec<f64> = (0..=dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
    let y = rng.random_bool(0.5);
    let (_, analytic) = lr_loss_grad(&theta, &x, y, l2);
    let numeric = central_differences(&theta, |t| lr_loss_grad(t, &x, y, l2).0, 1e-5);
    gradient_rel_error(&analytic, &numeric)
}

#[cfg(test)]
mod tests {
    use super::super::test_data::separable_blobs;
    use super::super::{train, Algorithm, TrainConfig};
    use super::*;

    #[test]
    fn zero_weights_score_half() {
        let model = LinearModel {
            weights: vec![0.0f64, 0.0],
            bias: 0.0,
        };
        assert_eq!(model.predict_row(&[3.0, -4.0]), 0.5);
    }

    #[test]
    fn separable_blobs_reach_perfect_training_accuracy() {
        let (x, y) = separable_blobs(200, 21);
        let model = train(&x, &y, &TrainConfig::new(Algorithm::Lr, 0)).unwrap();
        let scores = model.predict_proba(&x).unwrap();
        let correct = scores
            .iter()
            .zip(&y)
            .filter(|(s, &l)| (**s >= 0.5) == l)
            .count();
        assert_eq!(correct, y.len());
    }

    #[test]
    fn training_loss_is_nonincreasing() {
        let (x, y) = separable_blobs(150, 4);
        let model = train(&x, &y, &TrainConfig::new(Algorithm::Lr, 0)).unwrap();
        for w in model.meta.train_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss went up: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..20 {
            let err = gradient_check_lr(6, 1e-4, seed);
            assert!(err < 1e-6, "seed {seed}: rel err {err}");
        }
    }

    #[test]
    fn zero_input_gradient_is_bias_only() {
        // With no regularization and x = 0 the gradient is (p - y) on the
        // bias and zero on the weights.
        let theta = [0.3, -0.7, 0.2];
        let (_, grad) = lr_loss_grad(&theta, &[0.0, 0.0], true, 0.0);
        let p = 1.0 / (1.0 + (-0.2f64).exp());
        assert_eq!(grad[0], 0.0);
        assert_eq!(grad[1], 0.0);
        assert!((grad[2] - (p - 1.0)).abs() < 1e-15);
    }
}
