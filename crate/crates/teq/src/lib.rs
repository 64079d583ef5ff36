//! Alert-fatigue experimentation toolkit.
//!
//! The crate turns a stream of semi-structured security alerts into
//! incident-level actionability scores and evaluates what those scores buy a
//! SOC in practice:
//!
//! * [`alert`] — the data model: alert ingestion, machine-scoped 24-hour
//!   incident grouping, label propagation, chronological splits.
//! * [`featurize`] — schema-free featurization of arbitrary alert bodies into
//!   fixed-width numeric vectors.
//! * [`context`] — streaming look-back computation of temporal context
//!   features over nested time windows.
//! * [`learners`] — from-scratch binary classifiers (logistic regression,
//!   random forest, gradient-boosted trees, feed-forward net).
//! * [`ensemble`] — content/context model fusion, incident-level score
//!   aggregation, and selection over the full model zoo.
//! * [`triage`] — queue-time simulation, recall-targeted suppression, and
//!   within-incident alert ordering.
//! * [`metrics`], [`decay`], [`explain`] — evaluation metrics, the fixed
//!   vs. sliding-retraining decay experiments, and feature attributions.
//! * [`synth`] — a seeded synthetic SOC dataset generator.
//! * [`pipeline`] — end-to-end orchestration behind the `teq` CLI.
//!
//! The numeric core is generic over the floating-point type via [`Scalar`];
//! the CLI and pipeline use the [`Real`] alias.

pub mod alert;
pub mod context;
pub mod decay;
pub mod ensemble;
pub mod explain;
pub mod featurize;
pub mod learners;
pub mod matrix;
pub mod metrics;
pub mod num;
pub mod pipeline;
pub mod synth;
pub mod triage;
pub mod util;

pub use num::Scalar;

/// Default scalar used by the CLI and the pipeline.
pub type Real = f64;
/// Feature matrix in the default scalar.
pub type RealMatrix = matrix::DenseMatrix<Real>;
