//! One-hidden-layer feed-forward network with rectified units and a sigmoid
//! output, trained by seeded mini-batch SGD on the cross-entropy loss.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bce, central_differences, gradient_rel_error, sigmoid, MlpParams};
use crate::matrix::DenseMatrix;
use crate::num::Scalar;
use crate::util::dot;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct MlpModel<S> {
    pub input: usize,
    pub hidden: usize,
    /// Hidden weights, row-major `hidden x input`.
    pub w1: Vec<S>,
    pub b1: Vec<S>,
    pub w2: Vec<S>,
    pub b2: S,
}

impl<S: Scalar> MlpModel<S> {
    pub fn predict_row(&self, row: &[S]) -> S {
        let mut z = self.b2;
        for k in 0..self.hidden {
            let pre = self.b1[k] + dot(&self.w1[k * self.input..(k + 1) * self.input], row);
            if pre > S::zero() {
                z += self.w2[k] * pre;
            }
        }
        sigmoid(z)
    }
}

/// Per-row forward + backward pass. Returns the loss and accumulates the
/// parameter gradients into the provided buffers.
#[allow(clippy::too_many_arguments)]
fn row_grad<S: Scalar>(
    model: &MlpModel<S>,
    row: &[S],
    label: bool,
    grad_w1: &mut [S],
    grad_b1: &mut [S],
    grad_w2: &mut [S],
    grad_b2: &mut S,
    hidden_buf: &mut [S],
) -> f64 {
    let h = model.hidden;
    let d = model.input;
    let mut z = model.b2;
    for (k, slot) in hidden_buf.iter_mut().enumerate().take(h) {
        let pre = model.b1[k] + dot(&model.w1[k * d..(k + 1) * d], row);
        let act = if pre > S::zero() { pre } else { S::zero() };
        *slot = act;
        z += model.w2[k] * act;
    }
    let p = sigmoid(z);
    let target = if label { S::one() } else { S::zero() };
    let delta = p - target;
    *grad_b2 += delta;
    for k in 0..h {
        grad_w2[k] += delta * hidden_buf[k];
        if hidden_buf[k] > S::zero() {
            let dh = delta * model.w2[k];
            grad_b1[k] += dh;
            let g_row = &mut grad_w1[k * d..(k + 1) * d];
            for (g, x) in g_row.iter_mut().zip(row) {
                *g += dh * *x;
            }
        }
    }
    bce(p.as_f64(), label)
}

/// Mini-batch SGD; batches come from a per-epoch seeded shuffle and the batch
/// gradient folds per-chunk results in a fixed order, so training is
/// scheduling-independent.
pub(crate) fn train_mlp<S: Scalar>(
    x: &DenseMatrix<S>,
    y: &[bool],
    params: &MlpParams,
    seed: u64,
) -> (MlpModel<S>, Vec<f64>) {
    let d = x.cols();
    let h = params.hidden;
    let n = x.rows();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    // Uniform init scaled by fan-in; biases start at zero.
    let w1_scale = 1.0 / (d as f64).sqrt();
    let w2_scale = 1.0 / (h as f64).sqrt();
    let mut model = MlpModel {
        input: d,
        hidden: h,
        w1: (0..h * d)
            .map(|_| S::of((rng.random::<f64>() * 2.0 - 1.0) * w1_scale))
            .collect(),
        b1: vec![S::zero(); h],
        w2: (0..h)
            .map(|_| S::of((rng.random::<f64>() * 2.0 - 1.0) * w2_scale))
            .collect(),
        b2: S::zero(),
    };
    let mut order: Vec<usize> = (0..n).collect();
    let lr = S::of(params.learning_rate);
    let mut losses = Vec::with_capacity(params.epochs);
    const CHUNK: usize = 64;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        for batch in order.chunks(params.batch_size) {
            type GradParts<S> = (Vec<S>, Vec<S>, Vec<S>, S, f64);
            let parts: Vec<GradParts<S>> = batch
                .par_chunks(CHUNK)
                .map(|rows| {
                    let mut gw1 = vec![S::zero(); h * d];
                    let mut gb1 = vec![S::zero(); h];
                    let mut gw2 = vec![S::zero(); h];
                    let mut gb2 = S::zero();
                    let mut hidden = vec![S::zero(); h];
                    let mut loss = 0.0f64;
                    for &i in rows {
                        loss += row_grad(
                            &model,
                            x.row(i),
                            y[i],
                            &mut gw1,
                            &mut gb1,
                            &mut gw2,
                            &mut gb2,
                            &mut hidden,
                        );
                    }
                    (gw1, gb1, gw2, gb2, loss)
                })
                .collect();
            let scale = lr / S::of(batch.len() as f64);
            for (gw1, gb1, gw2, gb2, loss) in parts {
                for (w, g) in model.w1.iter_mut().zip(&gw1) {
                    *w -= scale * *g;
                }
                for (b, g) in model.b1.iter_mut().zip(&gb1) {
                    *b -= scale * *g;
                }
                for (w, g) in model.w2.iter_mut().zip(&gw2) {
                    *w -= scale * *g;
                }
                model.b2 -= scale * gb2;
                epoch_loss += loss;
            }
        }
        losses.push(epoch_loss / n as f64);
    }
    (model, losses)
}

/// Pack an f64 view of the parameters for the finite-difference check.
fn unflatten(theta: &[f64], d: usize, h: usize) -> MlpModel<f64> {
    let (w1, rest) = theta.split_at(h * d);
    let (b1, rest) = rest.split_at(h);
    let (w2, b2) = rest.split_at(h);
    MlpModel {
        input: d,
        hidden: h,
        w1: w1.to_vec(),
        b1: b1.to_vec(),
        w2: w2.to_vec(),
        b2: b2[0],
    }
}

fn mlp_point_loss(theta: &[f64], d: usize, h: usize, x: &[f64], y: bool) -> f64 {
    let model = unflatten(theta, d, h);
    bce(model.predict_row(x), y)
}

/// Finite-difference check of the network's backprop gradient at a random
/// parameter/input point. Points near a rectifier kink are rejected and
/// redrawn, since the loss is not differentiable there.
pub(crate) fn gradient_check_mlp(dim: usize, hidden: usize, seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let param_len = hidden * dim + hidden + hidden + 1;
    loop {
        let theta: Vec<f64> = (0..param_len)
            .map(|_| rng.random::<f64>() * 2.0 - 1.0)
            .collect();
        let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let y = rng.random_bool(0.5);
        let model = unflatten(&theta, dim, hidden);
        let near_kink = (0..hidden).any(|k| {
            let mut pre = model.b1[k];
            for (w, v) in model.w1[k * dim..(k + 1) * dim].iter().zip(&x) {
                pre += w * v;
            }
            pre.abs() < 1e-3
        });
        if near_kink {
            continue;
        }
        let mut gw1 = vec![0.0; hidden * dim];
        let mut gb1 = vec![0.0; hidden];
        let mut gw2 = vec![0.0; hidden];
        let mut gb2 = 0.0;
        let mut hidden_buf = vec![0.0; hidden];
        row_grad(
            &model,
            &x,
            y,
            &mut gw1,
            &mut gb1,
            &mut gw2,
            &mut gb2,
            &mut hidden_buf,
        );
        let mut analytic = gw1;
        analytic.extend(gb1);
        analytic.extend(gw2);
        analytic.push(gb2);
        let numeric = central_differences(&theta, |t| mlp_point_loss(t, dim, hidden, &x, y), 1e-5);
        return gradient_rel_error(&analytic, &numeric);
    }
}
