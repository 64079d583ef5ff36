//! Model-agnostic feature attributions: permutation importance and
//! Monte Carlo (permutation-sampled) Shapley values.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::DenseMatrix;
use crate::metrics::{self, MetricError};
use crate::num::Scalar;
use crate::util::derive_seed;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("repeats must be at least 1")]
    ZeroRepeats,
    #[error("samples must be at least 1")]
    ZeroSamples,
    #[error("background set is empty")]
    EmptyBackground,
    #[error("point width {0} does not match background width {1}")]
    WidthMismatch(usize, usize),
    #[error("metric undefined on these labels: {0}")]
    Metric(#[from] MetricError),
}

/// Metric whose degradation under column shuffling defines importance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMetric {
    RocAuc,
    PrAuc,
}

fn eval_metric<S: Scalar>(
    metric: ImportanceMetric,
    scores: &[S],
    labels: &[bool],
) -> Result<f64, MetricError> {
    match metric {
        ImportanceMetric::RocAuc => metrics::roc_auc(scores, labels),
        ImportanceMetric::PrAuc => metrics::pr_auc(scores, labels),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMethod {
    Permutation,
    SampledShapley,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub name: String,
    pub importance: f64,
}

/// Per-feature attributions plus how they were obtained.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub method: ImportanceMethod,
    /// Shuffle repeats (permutation) or Monte Carlo samples (Shapley).
    pub samples: usize,
    pub baseline_metric: Option<f64>,
    /// One entry per feature, in feature order.
    pub features: Vec<FeatureImportance>,
}

impl ImportanceReport {
    /// Features sorted by descending importance.
    pub fn ranked(&self) -> Vec<&FeatureImportance> {
        let mut refs: Vec<&FeatureImportance> = self.features.iter().collect();
        refs.sort_by(|a, b| {
            b.importance
                .partial_cmp(&a.importance)
                .expect("finite importance")
        });
        refs
    }
}

/// Mean metric drop over seeded column shuffles, one value per feature.
///
/// `predict` scores a whole matrix; the same function drives the baseline
/// and every shuffled evaluation. Deterministic given the seed: each
/// `(feature, repeat)` pair derives its own shuffle.
pub fn permutation_importance<S, F>(
    predict: F,
    x: &DenseMatrix<S>,
    labels: &[bool],
    metric: ImportanceMetric,
    repeats: usize,
    seed: u64,
) -> Result<Vec<f64>, ExplainError>
where
    S: Scalar,
    F: Fn(&DenseMatrix<S>) -> Vec<S> + Sync,
{
    if repeats == 0 {
        return Err(ExplainError::ZeroRepeats);
    }
    let baseline = eval_metric(metric, &predict(x), labels)?;
    let n = x.rows();
    let results: Vec<Result<f64, ExplainError>> = (0..x.cols())
        .into_par_iter()
        .map(|feature| {
            let mut drops = 0.0f64;
            for repeat in 0..repeats {
                let mut rng =
                    ChaCha20Rng::seed_from_u64(derive_seed(seed, &[feature as u64, repeat as u64]));
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng);
                let mut shuffled = x.clone();
                for (i, &src) in perm.iter().enumerate() {
                    let v = x.at(src, feature);
                    shuffled.row_mut(i)[feature] = v;
                }
                let score = eval_metric(metric, &predict(&shuffled), labels)?;
                drops += baseline - score;
            }
            Ok(drops / repeats as f64)
        })
        .collect();
    results.into_iter().collect()
}

/// Build an [`ImportanceReport`] from permutation importances.
pub fn permutation_report(
    names: &[String],
    importances: &[f64],
    baseline: f64,
    repeats: usize,
) -> ImportanceReport {
    ImportanceReport {
        method: ImportanceMethod::Permutation,
        samples: repeats,
        baseline_metric: Some(baseline),
        features: names
            .iter()
            .zip(importances)
            .map(|(name, &importance)| FeatureImportance {
                name: name.clone(),
                importance,
            })
            .collect(),
    }
}

/// Monte Carlo Shapley estimate for one prediction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapleyEstimate {
    pub attributions: Vec<f64>,
    /// Mean of the per-sample totals `f(x) - f(background_s)`; equals the
    /// attribution sum by construction.
    pub total_mean: f64,
    /// Population variance of the per-sample totals, for confidence bounds.
    pub total_variance: f64,
    pub samples: usize,
}

impl ShapleyEstimate {
    /// Half-width of the 95% confidence interval on the total.
    pub fn total_ci95(&self) -> f64 {
        1.96 * (self.total_variance / self.samples as f64).sqrt()
    }
}

/// Permutation-sampling Shapley values with background imputation.
///
/// Each sample draws a feature permutation and a background row, then walks
/// the permutation switching features from the background value to the
/// point's value, crediting each feature its marginal prediction change.
/// Per-sample totals telescope to `f(point) - f(background_row)`, so the
/// attribution sum estimates `f(point) - E[f(background)]`.
pub fn sampled_shapley<S, F>(
    predict: F,
    point: &[S],
    background: &DenseMatrix<S>,
    samples: usize,
    seed: u64,
) -> Result<ShapleyEstimate, ExplainError>
where
    S: Scalar,
    F: Fn(&[S]) -> S + Sync,
{
    if background.is_empty() {
        return Err(ExplainError::EmptyBackground);
    }
    if samples == 0 {
        return Err(ExplainError::ZeroSamples);
    }
    if point.len() != background.cols() {
        return Err(ExplainError::WidthMismatch(point.len(), background.cols()));
    }
    let d = point.len();
    let per_sample: Vec<(Vec<f64>, f64)> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, &[s as u64]));
            let bg_row = background.row(rng.random_range(0..background.rows()));
            let mut perm: Vec<usize> = (0..d).collect();
            perm.shuffle(&mut rng);
            let mut current = bg_row.to_vec();
            let mut prev = predict(&current).as_f64();
            let start = prev;
            let mut attr = vec![0.0f64; d];
            for &feature in &perm {
                current[feature] = point[feature];
                let next = predict(&current).as_f64();
                attr[feature] = next - prev;
                prev = next;
            }
            (attr, prev - start)
        })
        .collect();
    let mut attributions = vec![0.0f64; d];
    let mut totals = Vec::with_capacity(samples);
    for (attr, total) in per_sample {
        for (acc, a) in attributions.iter_mut().zip(attr) {
            *acc += a;
        }
        totals.push(total);
    }
    for a in attributions.iter_mut() {
        *a /= samples as f64;
    }
    let (mean, std) = crate::util::mean_std(&totals);
    Ok(ShapleyEstimate {
        attributions,
        total_mean: mean,
        total_variance: std * std,
        samples,
    })
}

/// Mean absolute Shapley attribution per feature over a set of points.
pub fn shapley_report<S, F>(
    predict: F,
    points: &DenseMatrix<S>,
    background: &DenseMatrix<S>,
    names: &[String],
    samples: usize,
    seed: u64,
) -> Result<ImportanceReport, ExplainError>
where
    S: Scalar,
    F: Fn(&[S]) -> S + Sync,
{
    let mut acc = vec![0.0f64; names.len()];
    for i in 0..points.rows() {
        let est = sampled_shapley(
            &predict,
            points.row(i),
            background,
            samples,
            derive_seed(seed, &[i as u64]),
        )?;
        for (a, v) in acc.iter_mut().zip(&est.attributions) {
            *a += v.abs();
        }
    }
    let n = points.rows().max(1) as f64;
    Ok(ImportanceReport {
        method: ImportanceMethod::SampledShapley,
        samples,
        baseline_metric: None,
        features: names
            .iter()
            .zip(&acc)
            .map(|(name, &sum)| FeatureImportance {
                name: name.clone(),
                importance: sum / n,
            })
            .collect(),
    })
}
