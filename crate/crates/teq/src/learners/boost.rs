//! Second-order gradient boosting on the logistic loss with exact greedy
//! splits.
//!
//! Each round fits a depth-bounded regression tree to the loss gradients
//! `g = p - y` and hessians `h = p (1 - p)`. Split gain is the usual
//! second-order score `(GL^2/(HL+l2) + GR^2/(HR+l2) - G^2/(H+l2)) / 2` and
//! leaf weights are `-G/(H+l2)`, shrunk by the learning rate. Feature order
//! is presorted once and trees grow level by level, scanning every feature's
//! sorted order per level, so training cost is `O(rounds x depth x d x n)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::split::{build_plans, FeaturePlan};
use super::{bce, GbtParams};
use crate::matrix::DenseMatrix;
use crate::num::Scalar;

const LEAF: i32 = -1;
const SETTLED: u32 = u32::MAX;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct RegTreeNode<S> {
    pub feature: i32,
    pub threshold: S,
    pub left: u32,
    pub right: u32,
    /// Margin contribution at a leaf, learning rate already applied.
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct RegTree<S> {
    pub nodes: Vec<RegTreeNode<S>>,
}

impl<S: Scalar> RegTree<S> {
    fn margin(&self, row: &[S]) -> f64 {
        let mut idx = 0usize;
        loop {
            let node = &self.nodes[idx];
            if node.feature == LEAF {
                return node.value;
            }
            idx = if row[node.feature as usize] <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct BoostedTrees<S> {
    pub trees: Vec<RegTree<S>>,
    /// Initial raw margin (logit of the 0.5 base score).
    pub base_margin: f64,
}

impl<S: Scalar> BoostedTrees<S> {
    pub fn predict_row(&self, row: &[S]) -> S {
        let margin: f64 = self.base_margin + self.trees.iter().map(|t| t.margin(row)).sum::<f64>();
        S::of(1.0 / (1.0 + (-margin).exp()))
    }
}

#[derive(Clone, Copy)]
struct Candidate<S> {
    gain: f64,
    feature: usize,
    threshold: S,
}

struct SlotStats {
    node_idx: usize,
    g: f64,
    h: f64,
    count: u32,
}

/// Best candidate per level slot for a binned feature: one accumulation
/// pass over rows, then a per-slot sweep over occupied value bins.
#[allow(clippy::too_many_arguments)]
fn scan_binned<S: Scalar>(
    feature: usize,
    values: &[S],
    bins: &[u16],
    node_of: &[u32],
    slots: &[SlotStats],
    grad: &[f64],
    hess: &[f64],
    l2: f64,
) -> Vec<Option<Candidate<S>>> {
    let nb = values.len();
    let mut acc = vec![(0.0f64, 0.0f64, 0u32); slots.len() * nb];
    for (row, &slot) in node_of.iter().enumerate() {
        if slot == SETTLED {
            continue;
        }
        let cell = &mut acc[slot as usize * nb + bins[row] as usize];
        cell.0 += grad[row];
        cell.1 += hess[row];
        cell.2 += 1;
    }
    let mut best: Vec<Option<Candidate<S>>> = vec![None; slots.len()];
    for (s, stats) in slots.iter().enumerate() {
        let row = &acc[s * nb..(s + 1) * nb];
        let mut run_g = 0.0f64;
        let mut run_h = 0.0f64;
        let mut run_n = 0u32;
        let mut prev_value: Option<S> = None;
        for (b, &(g, h, n)) in row.iter().enumerate() {
            if n == 0 {
                continue;
            }
            if let Some(threshold) = prev_value {
                if run_n > 0 && run_n < stats.count {
                    let gr = stats.g - run_g;
                    let hr = stats.h - run_h;
                    let gain = 0.5
                        * (run_g * run_g / (run_h + l2) + gr * gr / (hr + l2)
                            - stats.g * stats.g / (stats.h + l2));
                    if gain > 1e-12 && best[s].is_none_or(|c| gain > c.gain) {
                        best[s] = Some(Candidate {
                            gain,
                            feature,
                            threshold,
                        });
                    }
                }
            }
            run_g += g;
            run_h += h;
            run_n += n;
            prev_value = Some(values[b]);
        }
    }
    best
}

/// Best candidate per level slot for one feature's presorted scan.
#[allow(clippy::too_many_arguments)]
fn scan_feature<S: Scalar>(
    x: &DenseMatrix<S>,
    feature: usize,
    order: &[u32],
    node_of: &[u32],
    slots: &[SlotStats],
    grad: &[f64],
    hess: &[f64],
    l2: f64,
) -> Vec<Option<Candidate<S>>> {
    let mut best: Vec<Option<Candidate<S>>> = vec![None; slots.len()];
    let mut run_g = vec![0.0f64; slots.len()];
    let mut run_h = vec![0.0f64; slots.len()];
    let mut run_n = vec![0u32; slots.len()];
    let mut last: Vec<Option<S>> = vec![None; slots.len()];
    for &row in order {
        let slot = node_of[row as usize];
        if slot == SETTLED {
            continue;
        }
        let slot = slot as usize;
        let value = x.at(row as usize, feature);
        if let Some(prev) = last[slot] {
            if value > prev && run_n[slot] > 0 && run_n[slot] < slots[slot].count {
                let stats = &slots[slot];
                let gl = run_g[slot];
                let hl = run_h[slot];
                let gr = stats.g - gl;
                let hr = stats.h - hl;
                let gain = 0.5
                    * (gl * gl / (hl + l2) + gr * gr / (hr + l2)
                        - stats.g * stats.g / (stats.h + l2));
                if gain > 1e-12 && best[slot].is_none_or(|b| gain > b.gain) {
                    best[slot] = Some(Candidate {
                        gain,
                        feature,
                        threshold: prev,
                    });
                }
            }
        }
        run_g[slot] += grad[row as usize];
        run_h[slot] += hess[row as usize];
        run_n[slot] += 1;
        last[slot] = Some(value);
    }
    best
}

fn build_tree<S: Scalar>(
    x: &DenseMatrix<S>,
    plans: &[FeaturePlan<S>],
    grad: &[f64],
    hess: &[f64],
    margins: &mut [f64],
    params: &GbtParams,
) -> RegTree<S> {
    let n = x.rows();
    let shrink = params.learning_rate;
    let l2 = params.l2;
    let mut nodes: Vec<RegTreeNode<S>> = vec![RegTreeNode {
        feature: LEAF,
        threshold: S::zero(),
        left: 0,
        right: 0,
        value: 0.0,
    }];
    let mut node_of: Vec<u32> = vec![0; n];
    let root_g: f64 = grad.iter().sum();
    let root_h: f64 = hess.iter().sum();
    let mut slots = vec![SlotStats {
        node_idx: 0,
        g: root_g,
        h: root_h,
        count: n as u32,
    }];

    for depth in 0..=params.max_depth {
        if slots.is_empty() {
            break;
        }
        // Per-slot best split: per-feature scans in parallel, folded in
        // feature order so gain ties break to the lower feature index.
        let chosen: Vec<Option<Candidate<S>>> = if depth == params.max_depth {
            vec![None; slots.len()]
        } else {
            let per_feature: Vec<Vec<Option<Candidate<S>>>> = plans
                .par_iter()
                .enumerate()
                .map(|(f, plan)| match plan {
                    FeaturePlan::Sorted(order) => {
                        scan_feature(x, f, order, &node_of, &slots, grad, hess, l2)
                    }
                    FeaturePlan::Binned { values, bins } => {
                        scan_binned(f, values, bins, &node_of, &slots, grad, hess, l2)
                    }
                })
                .collect();
            let mut chosen: Vec<Option<Candidate<S>>> = vec![None; slots.len()];
            for feature_best in per_feature {
                for (slot, cand) in feature_best.into_iter().enumerate() {
                    if let Some(c) = cand {
                        if chosen[slot].is_none_or(|cur| c.gain > cur.gain) {
                            chosen[slot] = Some(c);
                        }
                    }
                }
            }
            chosen
        };

        // Materialize leaves and children; remap slots for the next level.
        let mut next_slots: Vec<SlotStats> = Vec::new();
        let mut leaf_value: Vec<f64> = vec![0.0; slots.len()];
        let mut child_base: Vec<u32> = vec![0; slots.len()];
        for (s, stats) in slots.iter().enumerate() {
            match &chosen[s] {
                Some(c) => {
                    let left = nodes.len() as u32;
                    nodes.push(RegTreeNode {
                        feature: LEAF,
                        threshold: S::zero(),
                        left: 0,
                        right: 0,
                        value: 0.0,
                    });
                    nodes.push(RegTreeNode {
                        feature: LEAF,
                        threshold: S::zero(),
                        left: 0,
                        right: 0,
                        value: 0.0,
                    });
                    let parent = &mut nodes[stats.node_idx];
                    parent.feature = c.feature as i32;
                    parent.threshold = c.threshold;
                    parent.left = left;
                    parent.right = left + 1;
                    child_base[s] = next_slots.len() as u32;
                    next_slots.push(SlotStats {
                        node_idx: left as usize,
                        g: 0.0,
                        h: 0.0,
                        count: 0,
                    });
                    next_slots.push(SlotStats {
                        node_idx: left as usize + 1,
                        g: 0.0,
                        h: 0.0,
                        count: 0,
                    });
                }
                None => {
                    let w = -stats.g / (stats.h + l2);
                    let value = shrink * w;
                    nodes[stats.node_idx].value = value;
                    leaf_value[s] = value;
                }
            }
        }
        for (row, slot) in node_of.iter_mut().enumerate() {
            if *slot == SETTLED {
                continue;
            }
            let s = *slot as usize;
            match &chosen[s] {
                Some(c) => {
                    let side = if x.at(row, c.feature) <= c.threshold {
                        0
                    } else {
                        1
                    } + child_base[s];
                    let child = &mut next_slots[side as usize];
                    child.g += grad[row];
                    child.h += hess[row];
                    child.count += 1;
                    *slot = side;
                }
                None => {
                    margins[row] += leaf_value[s];
                    *slot = SETTLED;
                }
            }
        }
        slots = next_slots;
    }
    RegTree { nodes }
}

/// Boost for the configured number of rounds. Returns the model and the
/// monitored training log-loss, starting at the base margin.
pub(crate) fn train_gbt<S: Scalar>(
    x: &DenseMatrix<S>,
    y: &[bool],
    params: &GbtParams,
) -> (BoostedTrees<S>, Vec<f64>) {
    let n = x.rows();
    // One global per-feature plan; tree levels reuse it every round.
    let plans = build_plans(x);

    let mut margins = vec![0.0f64; n];
    let loss = |margins: &[f64]| -> f64 {
        margins
            .iter()
            .zip(y)
            .map(|(&m, &label)| bce(1.0 / (1.0 + (-m).exp()), label))
            .sum::<f64>()
            / n as f64
    };
    let mut losses = Vec::with_capacity(params.rounds + 1);
    losses.push(loss(&margins));
    let mut trees = Vec::with_capacity(params.rounds);
    let mut grad = vec![0.0f64; n];
    let mut hess = vec![0.0f64; n];
    for _ in 0..params.rounds {
        for i in 0..n {
            let p = 1.0 / (1.0 + (-margins[i]).exp());
            grad[i] = p - f64::from(y[i]);
            hess[i] = (p * (1.0 - p)).max(1e-16);
        }
        trees.push(build_tree(x, &plans, &grad, &hess, &mut margins, params));
        losses.push(loss(&margins));
    }
    (
        BoostedTrees {
            trees,
            base_margin: 0.0,
        },
        losses,
    )
}
