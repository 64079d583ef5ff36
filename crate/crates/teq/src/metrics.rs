//! Binary classification metrics: ROC AUC, precision-recall AUC, and
//! precision at a recall target, plus the threshold-sweep curve behind them.
//!
//! ROC AUC is computed as the rank statistic (probability that a random
//! positive outscores a random negative, ties counted half), which equals the
//! trapezoidal area under the ROC curve. P-R AUC is average precision with
//! step integration, and precision-at-recall takes the best precision among
//! operating points meeting the recall target.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Scalar;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("scores and labels length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("metric needs at least one score")]
    Empty,
    #[error("score at index {0} is not finite")]
    NonFinite(usize),
    #[error("metric undefined: only one class present")]
    SingleClass,
    #[error("metric undefined: no positive labels")]
    NoPositives,
    #[error("recall target {0} outside (0, 1]")]
    InvalidRecallTarget(f64),
}

fn check_inputs<S: Scalar>(scores: &[S], labels: &[bool]) -> Result<(), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(MetricError::Empty);
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite(i));
    }
    Ok(())
}

/// Rank-based ROC AUC with average ranks over score ties.
pub fn roc_auc<S: Scalar>(scores: &[S], labels: &[bool]) -> Result<f64, MetricError> {
    check_inputs(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // Average rank within each tie group; sum ranks of positives.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let p = pos as f64;
    let n = neg as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Operating points at every distinct threshold, descending, as cumulative
/// `(threshold, tp, fp)` counts. Shared by the P-R metrics and
/// [`MetricCurve`].
fn threshold_sweep<S: Scalar>(scores: &[S], labels: &[bool]) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    let mut out = Vec::new();
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        let mut j = i;
        while j < order.len() && scores[order[j]] == threshold {
            if labels[order[j]] {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        out.push((threshold.as_f64(), tp, fp));
        i = j;
    }
    out
}

/// Precision-recall AUC as average precision (step integration over
/// descending-score thresholds).
pub fn pr_auc<S: Scalar>(scores: &[S], labels: &[bool]) -> Result<f64, MetricError> {
    check_inputs(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 {
        return Err(MetricError::NoPositives);
    }
    let mut ap = 0.0f64;
    let mut prev_recall = 0.0f64;
    for (_, tp, fp) in threshold_sweep(scores, labels) {
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Best precision among operating points whose recall is at least `target`.
pub fn precision_at_recall<S: Scalar>(
    scores: &[S],
    labels: &[bool],
    target: f64,
) -> Result<f64, MetricError> {
    check_inputs(scores, labels)?;
    if !(target > 0.0 && target <= 1.0) {
        return Err(MetricError::InvalidRecallTarget(target));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 {
        return Err(MetricError::NoPositives);
    }
    let mut best: Option<f64> = None;
    for (_, tp, fp) in threshold_sweep(scores, labels) {
        let recall = tp as f64 / pos as f64;
        if recall + 1e-12 >= target {
            let precision = tp as f64 / (tp + fp) as f64;
            best = Some(best.map_or(precision, |b: f64| b.max(precision)));
        }
    }
    // The lowest threshold always reaches recall 1.
    Ok(best.expect("full-recall operating point exists"))
}

/// Confusion counts per distinct threshold, descending, with the derived ROC
/// and P-R point series for plotting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricCurve {
    pub thresholds: Vec<f64>,
    pub tp: Vec<usize>,
    pub fp: Vec<usize>,
    pub tn: Vec<usize>,
    pub fn_: Vec<usize>,
    pub positives: usize,
    pub negatives: usize,
}

impl MetricCurve {
    pub fn from_scores<S: Scalar>(scores: &[S], labels: &[bool]) -> Result<Self, MetricError> {
        check_inputs(scores, labels)?;
        let positives = labels.iter().filter(|&&l| l).count();
        let negatives = labels.len() - positives;
        let mut curve = MetricCurve {
            thresholds: Vec::new(),
            tp: Vec::new(),
            fp: Vec::new(),
            tn: Vec::new(),
            fn_: Vec::new(),
            positives,
            negatives,
        };
        for (threshold, tp, fp) in threshold_sweep(scores, labels) {
            curve.thresholds.push(threshold);
            curve.tp.push(tp);
            curve.fp.push(fp);
            curve.tn.push(negatives - fp);
            curve.fn_.push(positives - tp);
        }
        Ok(curve)
    }

    /// `(fpr, tpr)` per threshold, with the (0,0) endpoint prepended.
    pub fn roc_points(&self) -> Vec<(f64, f64)> {
        let mut points = vec![(0.0, 0.0)];
        for i in 0..self.thresholds.len() {
            points.push((
                self.fp[i] as f64 / self.negatives.max(1) as f64,
                self.tp[i] as f64 / self.positives.max(1) as f64,
            ));
        }
        points
    }

    /// `(recall, precision)` per threshold.
    pub fn pr_points(&self) -> Vec<(f64, f64)> {
        (0..self.thresholds.len())
            .map(|i| {
                let denom = (self.tp[i] + self.fp[i]).max(1) as f64;
                (
                    self.tp[i] as f64 / self.positives.max(1) as f64,
                    self.tp[i] as f64 / denom,
                )
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    /// O(n^2) pair-counting definition of ROC AUC, ties counted half.
    fn pair_counting_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0f64;
        let mut pairs = 0.0f64;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn perfect_separation_is_one() {
        let scores = [0.9, 0.8, 0.2, 0.1];
        let labels = [true, true, false, false];
        assert_eq!(roc_auc(&scores, &labels).unwrap(), 1.0);
        assert_eq!(pr_auc(&scores, &labels).unwrap(), 1.0);
        assert_eq!(precision_at_recall(&scores, &labels, 0.95).unwrap(), 1.0);
    }

    #[test]
    fn all_ties_is_half() {
        let scores = [0.5, 0.5, 0.5, 0.5];
        let labels = [true, false, true, false];
        assert_eq!(roc_auc(&scores, &labels).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_an_error() {
        let scores = [0.5, 0.6];
        assert!(matches!(
            roc_auc(&scores, &[true, true]),
            Err(MetricError::SingleClass)
        ));
        assert!(matches!(
            pr_auc(&scores, &[false, false]),
            Err(MetricError::NoPositives)
        ));
    }

    #[test]
    fn matches_pair_counting_on_random_data() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..20 {
            let n = 400;
            // Quantized scores force plenty of ties.
            let scores: Vec<f64> = (0..n)
                .map(|_| rng.random_range(0..50) as f64 / 50.0)
                .collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
            if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
                continue;
            }
            let fast = roc_auc(&scores, &labels).unwrap();
            let slow = pair_counting_auc(&scores, &labels);
            assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
        }
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let scores: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        let labels: Vec<bool> = (0..300).map(|_| rng.random_bool(0.4)).collect();
        let base = roc_auc(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores
            .iter()
            .map(|s| 1.0 / (1.0 + (-5.0 * s).exp()))
            .collect();
        assert!((roc_auc(&squashed, &labels).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_average_precision() {
        // Descending: 0.9+ 0.8- 0.7+ 0.6- 0.5+ 0.4-
        let scores = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4];
        let labels = [true, false, true, false, true, false];
        let expect = (1.0 + 2.0 / 3.0 + 3.0 / 5.0) / 3.0;
        assert!((pr_auc(&scores, &labels).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn random_scores_pr_auc_approaches_positive_fraction() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let n = 10_000;
        let p = 0.3;
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(p)).collect();
        let ap = pr_auc(&scores, &labels).unwrap();
        assert!((ap - p).abs() < 0.02, "ap {ap} should be near {p}");
    }

    #[test]
    fn precision_at_recall_hand_case() {
        // pos: .9 .7 .5, neg: .8 .6; at recall >= 0.66 the best operating
        // point is threshold .7 with precision 2/3.
        let scores = [0.9, 0.8, 0.7, 0.6, 0.5];
        let labels = [true, false, true, false, true];
        let p = precision_at_recall(&scores, &labels, 0.66).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_recall_target_with_top_positive() {
        let scores = [0.99, 0.5, 0.4];
        let labels = [true, false, false];
        assert_eq!(precision_at_recall(&scores, &labels, 0.01).unwrap(), 1.0);
    }

    #[test]
    fn precision_at_recall_nonincreasing_in_target() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let scores: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
        let labels: Vec<bool> = scores
            .iter()
            .map(|&s| rng.random_bool(0.2 + 0.6 * s))
            .collect();
        let mut prev = f64::INFINITY;
        for r in [0.1, 0.3, 0.5, 0.7, 0.9, 1.0] {
            let p = precision_at_recall(&scores, &labels, r).unwrap();
            assert!(p <= prev + 1e-12);
            prev = p;
        }
    }

    #[test]
    fn curve_counts_are_consistent() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let scores: Vec<f64> = (0..100).map(|_| rng.random_range(0..20) as f64).collect();
        let labels: Vec<bool> = (0..100).map(|_| rng.random_bool(0.5)).collect();
        let curve = MetricCurve::from_scores(&scores, &labels).unwrap();
        for i in 0..curve.thresholds.len() {
            assert_eq!(curve.tp[i] + curve.fn_[i], curve.positives);
            assert_eq!(curve.fp[i] + curve.tn[i], curve.negatives);
        }
        // Recall nondecreasing as the threshold falls.
        let pr = curve.pr_points();
        for w in pr.windows(2) {
            assert!(w[0].0 <= w[1].0);
        }
        // Rank AUC equals trapezoidal area under the ROC points.
        let roc = curve.roc_points();
        let mut area = 0.0;
        for w in roc.windows(2) {
            area += (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0;
        }
        assert!((area - roc_auc(&scores, &labels).unwrap()).abs() < 1e-12);
    }
}
