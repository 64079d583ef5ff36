//! Random forest of Gini-impurity classification trees.
//!
//! Each tree trains on a bootstrap sample with a fresh per-split feature
//! subsample of ceil(sqrt(d)) candidates. Split thresholds sit on observed
//! values (`x <= v` goes left) and gain ties break toward the lower feature
//! index, then the lower threshold, so training is deterministic given the
//! per-tree derived seeds. Leaves store their positive-class fraction; the
//! forest averages leaf fractions over trees.
//!
//! Split search goes through the shared per-feature plans: low-cardinality
//! columns count straight into per-value accumulators, the rest sort the
//! node's values. Both enumerate exactly the boundaries between adjacent
//! distinct values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::split::{build_plans, FeaturePlan};
use super::RfParams;
use crate::matrix::DenseMatrix;
use crate::num::Scalar;
use crate::util::derive_seed;

/// Feature id marking a leaf node.
const LEAF: i32 = -1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct TreeNode<S> {
    /// Split feature, or -1 for a leaf.
    pub feature: i32,
    pub threshold: S,
    pub left: u32,
    pub right: u32,
    /// Positive-class fraction at this node (meaningful for leaves).
    pub value: S,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct ClassTree<S> {
    pub nodes: Vec<TreeNode<S>>,
}

impl<S: Scalar> ClassTree<S> {
    pub fn predict_row(&self, row: &[S]) -> S {
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
pub struct Forest<S> {
    pub trees: Vec<ClassTree<S>>,
}

impl<S: Scalar> Forest<S> {
    /// Mean leaf class-fraction over the trees.
    pub fn predict_row(&self, row: &[S]) -> S {
        let sum: S = self.trees.iter().map(|t| t.predict_row(row)).sum();
        sum / S::of(self.trees.len() as f64)
    }
}

fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

struct BestSplit<S> {
    feature: usize,
    threshold: S,
    gain: f64,
}

/// Reusable scratch for split search.
struct Scratch<S> {
    pairs: Vec<(S, bool)>,
    bins: Vec<(u32, u32)>,
}

/// Exact best split over the candidate features for the rows of one node.
/// Features ascend and thresholds ascend within a feature, with strict
/// improvement required, so ties resolve to the lowest feature and
/// threshold.
fn best_split<S: Scalar>(
    x: &DenseMatrix<S>,
    y: &[bool],
    rows: &[u32],
    features: &[usize],
    plans: &[FeaturePlan<S>],
    scratch: &mut Scratch<S>,
) -> Option<BestSplit<S>> {
    let total = rows.len();
    let total_pos = rows.iter().filter(|&&i| y[i as usize]).count();
    let parent = gini(total_pos, total);
    let mut best: Option<BestSplit<S>> = None;
    let consider = |feature: usize,
                    threshold: S,
                    left_n: usize,
                    left_pos: usize,
                    best: &mut Option<BestSplit<S>>| {
        let right_n = total - left_n;
        let right_pos = total_pos - left_pos;
        let weighted = (left_n as f64 * gini(left_pos, left_n)
            + right_n as f64 * gini(right_pos, right_n))
            / total as f64;
        let gain = parent - weighted;
        if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
            *best = Some(BestSplit {
                feature,
                threshold,
                gain,
            });
        }
    };
    for &feature in features {
        match &plans[feature] {
            FeaturePlan::Binned { values, bins } => {
                scratch.bins.clear();
                scratch.bins.resize(values.len(), (0, 0));
                for &i in rows {
                    let cell = &mut scratch.bins[bins[i as usize] as usize];
                    cell.0 += 1;
                    cell.1 += u32::from(y[i as usize]);
                }
                let mut left_n = 0usize;
                let mut left_pos = 0usize;
                let mut prev: Option<S> = None;
                for (b, &(n, pos)) in scratch.bins.iter().enumerate() {
                    if n == 0 {
                        continue;
                    }
                    if let Some(threshold) = prev {
                        if left_n > 0 {
                            consider(feature, threshold, left_n, left_pos, &mut best);
                        }
                    }
                    left_n += n as usize;
                    left_pos += pos as usize;
                    prev = Some(values[b]);
                }
            }
            FeaturePlan::Sorted(_) => {
                scratch.pairs.clear();
                scratch.pairs.extend(
                    rows.iter()
                        .map(|&i| (x.at(i as usize, feature), y[i as usize])),
                );
                scratch
                    .pairs
                    .sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
                let mut left_pos = 0usize;
                let mut left_n = 0usize;
                let mut k = 0usize;
                while k < scratch.pairs.len() {
                    let threshold = scratch.pairs[k].0;
                    while k < scratch.pairs.len() && scratch.pairs[k].0 == threshold {
                        left_pos += usize::from(scratch.pairs[k].1);
                        left_n += 1;
                        k += 1;
                    }
                    if k == scratch.pairs.len() {
                        break; // nothing to the right
                    }
                    consider(feature, threshold, left_n, left_pos, &mut best);
                }
            }
        }
    }
    best
}

fn build_tree<S: Scalar>(
    x: &DenseMatrix<S>,
    y: &[bool],
    plans: &[FeaturePlan<S>],
    params: &RfParams,
    seed: u64,
) -> ClassTree<S> {
    let n = x.rows();
    let d = x.cols();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sample: Vec<u32> = (0..n).map(|_| rng.random_range(0..n) as u32).collect();
    let k = (d as f64).sqrt().ceil() as usize;

    let mut nodes: Vec<TreeNode<S>> = Vec::new();
    let mut scratch = Scratch {
        pairs: Vec::new(),
        bins: Vec::new(),
    };
    let mut feature_pool: Vec<usize> = (0..d).collect();
    // LIFO stack keeps the rng draw order deterministic.
    let mut stack: Vec<(usize, Vec<u32>, usize)> = Vec::new();

    nodes.push(TreeNode {
        feature: LEAF,
        threshold: S::zero(),
        left: 0,
        right: 0,
        value: S::zero(),
    });
    stack.push((0, sample, 0));

    while let Some((node_idx, rows, depth)) = stack.pop() {
        let pos = rows.iter().filter(|&&i| y[i as usize]).count();
        let value = S::of(pos as f64 / rows.len() as f64);
        nodes[node_idx].value = value;
        let depth_ok = params.max_depth.is_none_or(|m| depth < m);
        if pos == 0 || pos == rows.len() || rows.len() < params.min_samples_split || !depth_ok {
            continue;
        }
        // Partial Fisher-Yates draw of k distinct candidate features.
        for i in 0..k.min(d) {
            let j = rng.random_range(i..d);
            feature_pool.swap(i, j);
        }
        let mut candidates: Vec<usize> = feature_pool[..k.min(d)].to_vec();
        candidates.sort_unstable();
        let Some(split) = best_split(x, y, &rows, &candidates, plans, &mut scratch) else {
            continue;
        };
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
            .iter()
            .partition(|&&i| x.at(i as usize, split.feature) <= split.threshold);
        let left = nodes.len() as u32;
        let right = left + 1;
        nodes.push(TreeNode {
            feature: LEAF,
            threshold: S::zero(),
            left: 0,
            right: 0,
            value,
        });
        nodes.push(TreeNode {
            feature: LEAF,
            threshold: S::zero(),
            left: 0,
            right: 0,
            value,
        });
        let node = &mut nodes[node_idx];
        node.feature = split.feature as i32;
        node.threshold = split.threshold;
        node.left = left;
        node.right = right;
        // Right pushed first so the left child pops next.
        stack.push((right as usize, right_rows, depth + 1));
        stack.push((left as usize, left_rows, depth + 1));
    }
    ClassTree { nodes }
}

/// Train the forest; the per-feature plans are shared across trees and the
/// trees run in parallel on derived seeds, collected in tree order, so the
/// result is independent of scheduling.
pub(crate) fn train_forest<S: Scalar>(
    x: &DenseMatrix<S>,
    y: &[bool],
    params: &RfParams,
    seed: u64,
) -> Forest<S> {
    let plans = build_plans(x);
    let trees: Vec<ClassTree<S>> = (0..params.trees)
        .into_par_iter()
        .map(|t| {
            build_tree(
                x,
                y,
                &plans,
                params,
                derive_seed(seed, &[0x7265_6573, t as u64]),
            )
        })
        .collect();
    Forest { trees }
}
