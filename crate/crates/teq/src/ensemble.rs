//! Content/context model fusion, incident-level aggregation, and model-zoo
//! selection.
//!
//! Four base algorithms per feature set give eight alert-level models; every
//! content/context pair combines under four fixed aggregation strategies for
//! 64 ensembles, and the 72 candidates are scored at the incident level on
//! the held-out month. An incident's score is the maximum combined alert
//! score over its members, and selection is by incident ROC AUC with
//! deterministic tie-breaks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::{self, Algorithm, TrainConfig, TrainError, TrainedModel, ALL_ALGORITHMS};
use crate::matrix::DenseMatrix;
use crate::metrics::{self, MetricError};
use crate::num::Scalar;
use crate::util::derive_seed;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("score {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("incident score needs at least one alert score")]
    EmptyIncident,
    #[error("candidate metrics undefined: {0}")]
    Metric(#[from] MetricError),
    #[error("training failed: {0}")]
    Train(#[from] TrainError),
    #[error("test set has no incidents")]
    EmptyTestSet,
    #[error("incident member index {0} out of bounds")]
    BadMemberIndex(usize),
    #[error("content and context test matrices disagree on rows: {0} vs {1}")]
    RowMismatch(usize, usize),
}

/// How a content score and a context score fuse into one alert score.
/// Weighted variants are named by their content weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleStrategy {
    Average,
    Max,
    WeightedContent70,
    WeightedContent30,
}

pub const ALL_STRATEGIES: [EnsembleStrategy; 4] = [
    EnsembleStrategy::Average,
    EnsembleStrategy::Max,
    EnsembleStrategy::WeightedContent70,
    EnsembleStrategy::WeightedContent30,
];

impl EnsembleStrategy {
    pub fn name(self) -> &'static str {
        match self {
            EnsembleStrategy::Average => "average",
            EnsembleStrategy::Max => "max",
            EnsembleStrategy::WeightedContent70 => "weighted_70_30",
            EnsembleStrategy::WeightedContent30 => "weighted_30_70",
        }
    }

    /// Fuse without range checks; callers own the [0, 1] invariant.
    pub(crate) fn combine_unchecked<S: Scalar>(self, content: S, context: S) -> S {
        match self {
            EnsembleStrategy::Average => (content + context) / S::of(2.0),
            EnsembleStrategy::Max => content.max(context),
            EnsembleStrategy::WeightedContent70 => S::of(0.7) * content + S::of(0.3) * context,
            EnsembleStrategy::WeightedContent30 => S::of(0.3) * content + S::of(0.7) * context,
        }
    }
}

impl std::fmt::Display for EnsembleStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Fuse one content score with one context score under a strategy.
pub fn ensemble_score<S: Scalar>(
    content: S,
    context: S,
    strategy: EnsembleStrategy,
) -> Result<S, EnsembleError> {
    for v in [content, context] {
        if !(v >= S::zero() && v <= S::one()) {
            return Err(EnsembleError::OutOfRange(v.as_f64()));
        }
    }
    Ok(strategy.combine_unchecked(content, context))
}

/// Incident score: the maximum alert score over the incident's members.
pub fn incident_score<S: Scalar>(alert_scores: &[S]) -> Result<S, EnsembleError> {
    if alert_scores.is_empty() {
        return Err(EnsembleError::EmptyIncident);
    }
    Ok(alert_scores.iter().copied().fold(S::zero(), S::max))
}

/// A fused pair of trained models.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct EnsembleModel<S> {
    pub content: TrainedModel<S>,
    pub context: TrainedModel<S>,
    pub strategy: EnsembleStrategy,
}

impl<S: Scalar> EnsembleModel<S> {
    /// Combined alert scores for aligned content/context feature rows.
    pub fn score_alerts(
        &self,
        content: &DenseMatrix<S>,
        context: &DenseMatrix<S>,
    ) -> Result<Vec<S>, EnsembleError> {
        if content.rows() != context.rows() {
            return Err(EnsembleError::RowMismatch(content.rows(), context.rows()));
        }
        let a = self.content.predict_proba(content)?;
        let b = self.context.predict_proba(context)?;
        Ok(a.into_iter()
            .zip(b)
            .map(|(x, y)| self.strategy.combine_unchecked(x, y))
            .collect())
    }
}

/// One of the 72 scored candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Candidate {
    Content {
        algo: Algorithm,
    },
    Context {
        algo: Algorithm,
    },
    Ensemble {
        content: Algorithm,
        context: Algorithm,
        strategy: EnsembleStrategy,
    },
}

impl std::fmt::Display for Candidate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Candidate::Content { algo } => write!(f, "content:{algo}"),
            Candidate::Context { algo } => write!(f, "context:{algo}"),
            Candidate::Ensemble {
                content,
                context,
                strategy,
            } => {
                write!(f, "ensemble:{content}+{context}:{strategy}")
            }
        }
    }
}

/// Incident-level test metrics for one candidate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CandidateMetrics {
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub precision_at_90: f64,
    pub precision_at_95: f64,
    pub precision_at_99: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub candidate: Candidate,
    pub metrics: CandidateMetrics,
}

/// Held-out month at the incident level: aligned content/context feature
/// rows for every member alert, plus the incident structure over those rows.
#[derive(Debug, Clone)]
pub struct ZooTestSet<S> {
    pub content: DenseMatrix<S>,
    pub context: DenseMatrix<S>,
    /// Per incident: indices into the feature rows.
    pub incident_members: Vec<Vec<usize>>,
    pub incident_labels: Vec<bool>,
}

/// The full model zoo: eight base models and all candidate scores.
#[derive(Debug)]
pub struct ModelZoo<S> {
    /// Content models in [`ALL_ALGORITHMS`] order.
    pub content_models: Vec<TrainedModel<S>>,
    /// Context models in [`ALL_ALGORITHMS`] order.
    pub context_models: Vec<TrainedModel<S>>,
    /// All 72 candidates in enumeration order with incident-level metrics.
    pub scored: Vec<ScoredCandidate>,
    /// Positive-incident fraction of the test month.
    pub baseline_precision: f64,
}

impl<S: Scalar> ModelZoo<S> {
    pub fn content_model(&self, algo: Algorithm) -> &TrainedModel<S> {
        &self.content_models[algo_index(algo)]
    }

    pub fn context_model(&self, algo: Algorithm) -> &TrainedModel<S> {
        &self.context_models[algo_index(algo)]
    }

    /// Assemble the deployable model behind a candidate id.
    pub fn winner_bundle(&self, candidate: Candidate) -> WinnerBundle<S> {
        match candidate {
            Candidate::Content { algo } => {
                WinnerBundle::ContentOnly(self.content_model(algo).clone())
            }
            Candidate::Context { algo } => {
                WinnerBundle::ContextOnly(self.context_model(algo).clone())
            }
            Candidate::Ensemble {
                content,
                context,
                strategy,
            } => WinnerBundle::Pair(EnsembleModel {
                content: self.content_model(content).clone(),
                context: self.context_model(context).clone(),
                strategy,
            }),
        }
    }
}

/// A selected candidate packaged for deployment: scores alerts given aligned
/// content and context feature rows, whichever side(s) it actually uses.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
#[serde(rename_all = "snake_case")]
pub enum WinnerBundle<S> {
    ContentOnly(TrainedModel<S>),
    ContextOnly(TrainedModel<S>),
    Pair(EnsembleModel<S>),
}

impl<S: Scalar> WinnerBundle<S> {
    pub fn score_alerts(
        &self,
        content: &DenseMatrix<S>,
        context: &DenseMatrix<S>,
    ) -> Result<Vec<S>, EnsembleError> {
        if content.rows() != context.rows() {
            return Err(EnsembleError::RowMismatch(content.rows(), context.rows()));
        }
        match self {
            WinnerBundle::ContentOnly(m) => Ok(m.predict_proba(content)?),
            WinnerBundle::ContextOnly(m) => Ok(m.predict_proba(context)?),
            WinnerBundle::Pair(pair) => pair.score_alerts(content, context),
        }
    }
}

fn algo_index(algo: Algorithm) -> usize {
    ALL_ALGORITHMS
        .iter()
        .position(|&a| a == algo)
        .expect("known algorithm")
}

/// Fixed candidate enumeration: content singles, context singles, then the
/// full cross product; ties in selection resolve to the earliest entry.
pub fn enumerate_candidates() -> Vec<Candidate> {
    let mut out = Vec::with_capacity(72);
    for algo in ALL_ALGORITHMS {
        out.push(Candidate::Content { algo });
    }
    for algo in ALL_ALGORITHMS {
        out.push(Candidate::Context { algo });
    }
    for content in ALL_ALGORITHMS {
        for context in ALL_ALGORITHMS {
            for strategy in ALL_STRATEGIES {
                out.push(Candidate::Ensemble {
                    content,
                    context,
                    strategy,
                });
            }
        }
    }
    out
}

/// Incident scores under max aggregation for one alert-score vector.
pub fn incident_scores<S: Scalar>(
    alert_scores: &[S],
    members: &[Vec<usize>],
) -> Result<Vec<S>, EnsembleError> {
    members
        .iter()
        .map(|m| {
            let scores: Result<Vec<S>, EnsembleError> = m
                .iter()
                .map(|&i| {
                    alert_scores
                        .get(i)
                        .copied()
                        .ok_or(EnsembleError::BadMemberIndex(i))
                })
                .collect();
            incident_score(&scores?)
        })
        .collect()
}

pub(crate) fn candidate_metrics<S: Scalar>(
    scores: &[S],
    labels: &[bool],
) -> Result<CandidateMetrics, EnsembleError> {
    Ok(CandidateMetrics {
        roc_auc: metrics::roc_auc(scores, labels)?,
        pr_auc: metrics::pr_auc(scores, labels)?,
        precision_at_90: metrics::precision_at_recall(scores, labels, 0.90)?,
        precision_at_95: metrics::precision_at_recall(scores, labels, 0.95)?,
        precision_at_99: metrics::precision_at_recall(scores, labels, 0.99)?,
    })
}

/// Train the eight base models and score all 72 candidates at the incident
/// level on the held-out month. Per-model seeds derive from `seed`, so the
/// zoo is reproducible end to end.
pub fn build_zoo<S: Scalar>(
    content_train: (&DenseMatrix<S>, &[bool]),
    context_train: (&DenseMatrix<S>, &[bool]),
    test: &ZooTestSet<S>,
    seed: u64,
) -> Result<ModelZoo<S>, EnsembleError> {
    if test.incident_members.is_empty() {
        return Err(EnsembleError::EmptyTestSet);
    }
    if test.content.rows() != test.context.rows() {
        return Err(EnsembleError::RowMismatch(
            test.content.rows(),
            test.context.rows(),
        ));
    }
    let jobs: Vec<(usize, bool)> = (0..ALL_ALGORITHMS.len())
        .map(|i| (i, true))
        .chain((0..ALL_ALGORITHMS.len()).map(|i| (i, false)))
        .collect();
    let trained: Vec<Result<TrainedModel<S>, TrainError>> = jobs
        .par_iter()
        .map(|&(idx, is_content)| {
            let algo = ALL_ALGORITHMS[idx];
            let tag = if is_content { 1u64 } else { 2u64 };
            let config = TrainConfig::new(algo, derive_seed(seed, &[tag, idx as u64]));
            let (x, y) = if is_content {
                content_train
            } else {
                context_train
            };
            let started = std::time::Instant::now();
            let model = learners::train(x, y, &config);
            if std::env::var_os("TEQ_TIMINGS").is_some() {
                eprintln!(
                    "train {} {} ({}x{}): {:.2}s",
                    if is_content { "content" } else { "context" },
                    algo,
                    x.rows(),
                    x.cols(),
                    started.elapsed().as_secs_f64()
                );
            }
            model
        })
        .collect();
    let mut content_models = Vec::with_capacity(4);
    let mut context_models = Vec::with_capacity(4);
    for (i, model) in trained.into_iter().enumerate() {
        let model = model?;
        if i < ALL_ALGORITHMS.len() {
            content_models.push(model);
        } else {
            context_models.push(model);
        }
    }

    // One prediction pass per base model; ensembles reuse them.
    let content_scores: Vec<Vec<S>> = content_models
        .iter()
        .map(|m| m.predict_proba(&test.content))
        .collect::<Result<_, _>>()?;
    let context_scores: Vec<Vec<S>> = context_models
        .iter()
        .map(|m| m.predict_proba(&test.context))
        .collect::<Result<_, _>>()?;

    let labels = &test.incident_labels;
    let mut scored = Vec::with_capacity(72);
    for candidate in enumerate_candidates() {
        let alert_scores: Vec<S> = match candidate {
            Candidate::Content { algo } => content_scores[algo_index(algo)].clone(),
            Candidate::Context { algo } => context_scores[algo_index(algo)].clone(),
            Candidate::Ensemble {
                content,
                context,
                strategy,
            } => content_scores[algo_index(content)]
                .iter()
                .zip(&context_scores[algo_index(context)])
                .map(|(&a, &b)| strategy.combine_unchecked(a, b))
                .collect(),
        };
        let inc_scores = incident_scores(&alert_scores, &test.incident_members)?;
        scored.push(ScoredCandidate {
            candidate,
            metrics: candidate_metrics(&inc_scores, labels)?,
        });
    }

    let positives = labels.iter().filter(|&&l| l).count();
    Ok(ModelZoo {
        content_models,
        context_models,
        scored,
        baseline_precision: positives as f64 / labels.len() as f64,
    })
}

/// Winner and headline metrics of a zoo.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionReport {
    pub winner: Candidate,
    pub metrics: CandidateMetrics,
    pub baseline_precision: f64,
    /// Every candidate's metrics, enumeration order.
    pub candidates: Vec<ScoredCandidate>,
}

/// Pick the candidate with the highest incident ROC AUC; ties break to the
/// higher P-R AUC, then to enumeration order.
pub fn select_best<S: Scalar>(zoo: &ModelZoo<S>) -> Result<SelectionReport, EnsembleError> {
    let mut best: Option<&ScoredCandidate> = None;
    for sc in &zoo.scored {
        let better = match best {
            None => true,
            Some(cur) => {
                sc.metrics.roc_auc > cur.metrics.roc_auc
                    || (sc.metrics.roc_auc == cur.metrics.roc_auc
                        && sc.metrics.pr_auc > cur.metrics.pr_auc)
            }
        };
        if better {
            best = Some(sc);
        }
    }
    let best = best.ok_or(EnsembleError::EmptyTestSet)?;
    Ok(SelectionReport {
        winner: best.candidate,
        metrics: best.metrics,
        baseline_precision: zoo.baseline_precision,
        candidates: zoo.scored.clone(),
    })
}

/// Zoo metrics table as CSV, one row per candidate.
pub fn zoo_metrics_csv(report: &SelectionReport) -> String {
    let mut out = String::from(
        "task,content_algo,context_algo,strategy,roc_auc,pr_auc,precision_at_90,precision_at_95,precision_at_99,baseline_precision\n",
    );
    for sc in &report.candidates {
        let (task, content, context, strategy) = match sc.candidate {
            Candidate::Content { algo } => ("content", algo.name(), "", ""),
            Candidate::Context { algo } => ("context", "", algo.name(), ""),
            Candidate::Ensemble {
                content,
                context,
                strategy,
            } => ("ensemble", content.name(), context.name(), strategy.name()),
        };
        out.push_str(&format!(
            "{task},{content},{context},{strategy},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            sc.metrics.roc_auc,
            sc.metrics.pr_auc,
            sc.metrics.precision_at_90,
            sc.metrics.precision_at_95,
            sc.metrics.precision_at_99,
            report.baseline_precision,
        ));
    }
    out
}
