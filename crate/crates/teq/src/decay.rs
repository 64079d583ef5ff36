//! Performance-decay experiments over 30-day months.
//!
//! Two scenarios share the same windowed machinery: FIXED trains one zoo on
//! the first five months, selects on month six, and evaluates the frozen
//! winner on the remaining two months; RETRAIN slides the five-month window
//! forward one month at a time, rebuilding and reselecting per window. Both
//! scenarios consume one window-0 build, so their first test month agrees to
//! the last bit.
//!
//! Featurization is refit per training window (vocabularies and train
//! statistics must not see the future); context features are a pure
//! look-back function of the stream, so they are computed once globally and
//! only their standardization is window-fitted.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alert::{AlertError, DatasetSplit, Incident, RawAlert};
use crate::context::{compute_context_stream, ContextConfig, ContextError};
use crate::ensemble::{
    build_zoo, select_best, Candidate, CandidateMetrics, EnsembleError, ModelZoo, SelectionReport,
    ZooTestSet,
};
use crate::featurize::{
    fit_feature_spec, flatten_document, transform_record, FeatureSpec, FeaturizeError, Standardizer,
};
use crate::matrix::DenseMatrix;
use crate::metrics::{MetricCurve, MetricError};
use crate::num::Scalar;
use crate::util::derive_seed;

#[derive(Debug, Error)]
pub enum DecayError {
    #[error("need at least {needed} months of data, found {have}")]
    InsufficientSpan { needed: usize, have: usize },
    #[error("incident {0} has no label")]
    Unlabeled(String),
    #[error("no incidents anchored in month {0}")]
    EmptyMonth(usize),
    #[error(transparent)]
    Alert(#[from] AlertError),
    #[error(transparent)]
    Featurize(#[from] FeaturizeError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Zoo(#[from] EnsembleError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Fixed,
    Retrain,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Fixed => "fixed",
            Scenario::Retrain => "retrain",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayConfig {
    /// Start of month 0.
    pub origin: i64,
    pub month_secs: u64,
    pub train_months: usize,
    pub seed: u64,
    pub rare_threshold: usize,
    pub context: ContextConfig,
}

impl DecayConfig {
    pub fn new(origin: i64, seed: u64) -> Self {
        Self {
            origin,
            month_secs: 2_592_000,
            train_months: 5,
            seed,
            rare_threshold: crate::featurize::DEFAULT_RARE_THRESHOLD,
            context: ContextConfig::default(),
        }
    }

    pub fn month_range(&self, month: usize) -> (i64, i64) {
        let start = self.origin + (month as u64 * self.month_secs) as i64;
        (start, start + self.month_secs as i64)
    }

    /// Months 0-based that serve as test months 1..=3.
    pub fn test_months(&self) -> [usize; 3] {
        [
            self.train_months,
            self.train_months + 1,
            self.train_months + 2,
        ]
    }
}

/// One scenario-month result row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayRow {
    pub scenario: Scenario,
    /// 1-based test month within the experiment.
    pub test_month: usize,
    pub winner: Candidate,
    pub metrics: CandidateMetrics,
    pub baseline_precision: f64,
    /// `(fpr, tpr)` points of the winner on this month.
    pub roc_points: Vec<(f64, f64)>,
    /// `(recall, precision)` points of the winner on this month.
    pub pr_points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayReport {
    pub scenario: Scenario,
    pub rows: Vec<DecayRow>,
}

/// Everything fitted for one sliding window.
pub struct WindowArtifacts<S> {
    pub window: usize,
    pub zoo: ModelZoo<S>,
    pub selection: SelectionReport,
    pub spec: FeatureSpec,
    pub standardizer: Standardizer,
}

struct AssembledSet<S> {
    content: DenseMatrix<S>,
    context_raw: DenseMatrix<S>,
    members: Vec<Vec<usize>>,
    incident_labels: Vec<bool>,
    alert_labels: Vec<bool>,
}

/// A month scored by one window's selected winner.
#[derive(Debug, Clone)]
pub struct MonthScores<S> {
    /// 0-based month index.
    pub month: usize,
    pub winner: Candidate,
    /// Indices into the experiment's incident slice, anchor order.
    pub incident_indices: Vec<usize>,
    pub incident_scores: Vec<S>,
    pub incident_labels: Vec<bool>,
    /// Member alert ids in incident order, aligned with `alert_scores`.
    pub alert_ids: Vec<String>,
    pub alert_scores: Vec<S>,
}

/// Feature view of one month under a window's featurization.
#[derive(Debug, Clone)]
pub struct MonthFeatures<S> {
    pub content: DenseMatrix<S>,
    pub context: DenseMatrix<S>,
    pub alert_labels: Vec<bool>,
}

/// Shared state for both scenarios: precomputed flattened bodies, global
/// context vectors, and a cache of fitted windows.
pub struct DecayExperiment<'a, S> {
    incidents: &'a [Incident],
    pub config: DecayConfig,
    flats: Vec<crate::featurize::FlatRecord>,
    context_matrix: DenseMatrix<S>,
    alert_index: HashMap<&'a str, usize>,
    windows: HashMap<usize, WindowArtifacts<S>>,
}

impl<'a, S: Scalar> DecayExperiment<'a, S> {
    pub fn new(
        alerts: &'a [RawAlert],
        incidents: &'a [Incident],
        config: DecayConfig,
    ) -> Result<Self, DecayError> {
        let needed = config.train_months + 3;
        let have = incidents
            .iter()
            .map(|i| {
                ((i.anchor_time - config.origin).max(0) as u64 / config.month_secs) as usize + 1
            })
            .max()
            .unwrap_or(0);
        if have < needed {
            return Err(DecayError::InsufficientSpan { needed, have });
        }
        for inc in incidents {
            if inc.label.is_none() {
                return Err(DecayError::Unlabeled(inc.incident_id.clone()));
            }
        }
        let flats = alerts
            .iter()
            .map(|a| flatten_document(&a.body))
            .collect::<Result<Vec<_>, _>>()?;
        let context_vectors = compute_context_stream::<S>(alerts, &config.context)?;
        let mut context_matrix = DenseMatrix::with_width(config.context.width());
        for v in &context_vectors {
            context_matrix.push_row(&v.values);
        }
        let alert_index = alerts
            .iter()
            .enumerate()
            .map(|(i, a)| (a.alert_id.as_str(), i))
            .collect();
        Ok(Self {
            incidents,
            config,
            flats,
            context_matrix,
            alert_index,
            windows: HashMap::new(),
        })
    }

    fn incidents_in_range(&self, range: (i64, i64)) -> Vec<usize> {
        self.incidents
            .iter()
            .enumerate()
            .filter(|(_, inc)| inc.anchor_time >= range.0 && inc.anchor_time < range.1)
            .map(|(i, _)| i)
            .collect()
    }

    fn assemble(&self, incident_indices: &[usize], spec: &FeatureSpec) -> AssembledSet<S> {
        let mut content = DenseMatrix::with_width(spec.width());
        let mut context_raw = DenseMatrix::with_width(self.context_matrix.cols());
        let mut members = Vec::with_capacity(incident_indices.len());
        let mut incident_labels = Vec::with_capacity(incident_indices.len());
        let mut alert_labels = Vec::new();
        for &k in incident_indices {
            let inc = &self.incidents[k];
            let label = inc.label.expect("validated at construction");
            let mut member_rows = Vec::with_capacity(inc.alert_ids.len());
            for id in &inc.alert_ids {
                let g = self.alert_index[id.as_str()];
                member_rows.push(content.rows());
                content.push_row(&transform_record::<S>(&self.flats[g], spec));
                context_raw.push_row(self.context_matrix.row(g));
                alert_labels.push(label);
            }
            members.push(member_rows);
            incident_labels.push(label);
        }
        AssembledSet {
            content,
            context_raw,
            members,
            incident_labels,
            alert_labels,
        }
    }

    /// Fit (or fetch) the zoo for sliding window `w`: train months
    /// `[w, w + train_months)`, test month `w + train_months`.
    pub fn window(&mut self, w: usize) -> Result<&WindowArtifacts<S>, DecayError> {
        if self.windows.contains_key(&w) {
            return Ok(&self.windows[&w]);
        }
        let config = &self.config;
        let train_range = (
            config.month_range(w).0,
            config.month_range(w + config.train_months).0,
        );
        let test_range = config.month_range(w + config.train_months);
        let split = DatasetSplit {
            train_range,
            test_range,
        };
        split.validate()?;
        let train_incidents = self.incidents_in_range(train_range);
        let test_incidents = self.incidents_in_range(test_range);
        if train_incidents.is_empty() {
            return Err(DecayError::EmptyMonth(w));
        }
        if test_incidents.is_empty() {
            return Err(DecayError::EmptyMonth(w + config.train_months));
        }

        // Featurization is fitted on the window's training alerts only.
        let mut train_flats = Vec::new();
        for &k in &train_incidents {
            for id in &self.incidents[k].alert_ids {
                train_flats.push(self.flats[self.alert_index[id.as_str()]].clone());
            }
        }
        let spec = fit_feature_spec(&train_flats, config.rare_threshold)?;

        let train = self.assemble(&train_incidents, &spec);
        let test = self.assemble(&test_incidents, &spec);
        let standardizer = Standardizer::fit(&train.context_raw);
        let train_context = standardizer.apply(&train.context_raw);
        let test_set = ZooTestSet {
            content: test.content,
            context: standardizer.apply(&test.context_raw),
            incident_members: test.members,
            incident_labels: test.incident_labels,
        };
        let zoo = build_zoo(
            (&train.content, &train.alert_labels),
            (&train_context, &train.alert_labels),
            &test_set,
            derive_seed(config.seed, &[0x7a6f, w as u64]),
        )?;
        let selection = select_best(&zoo)?;
        let artifacts = WindowArtifacts {
            window: w,
            zoo,
            selection,
            spec,
            standardizer,
        };
        Ok(self.windows.entry(w).or_insert(artifacts))
    }

    /// Score a window's winner on an arbitrary month: incident-level scores
    /// plus the per-alert scores behind them.
    pub fn score_month(&mut self, w: usize, month: usize) -> Result<MonthScores<S>, DecayError> {
        self.window(w)?;
        let artifacts = &self.windows[&w];
        let winner = artifacts.selection.winner;
        let bundle = artifacts.zoo.winner_bundle(winner);
        let spec = artifacts.spec.clone();
        let standardizer = artifacts.standardizer.clone();

        let month_range = self.config.month_range(month);
        let incident_indices = self.incidents_in_range(month_range);
        if incident_indices.is_empty() {
            return Err(DecayError::EmptyMonth(month));
        }
        let set = self.assemble(&incident_indices, &spec);
        let context = standardizer.apply(&set.context_raw);
        let alert_scores = bundle.score_alerts(&set.content, &context)?;
        let incident_scores = crate::ensemble::incident_scores(&alert_scores, &set.members)?;
        let alert_ids = incident_indices
            .iter()
            .flat_map(|&k| self.incidents[k].alert_ids.iter().cloned())
            .collect();
        Ok(MonthScores {
            month,
            winner,
            incident_indices,
            incident_scores,
            incident_labels: set.incident_labels,
            alert_ids,
            alert_scores,
        })
    }

    /// Feature matrices and alert labels for one month under a window's
    /// fitted featurization (for explainability runs).
    pub fn month_features(
        &mut self,
        w: usize,
        month: usize,
    ) -> Result<MonthFeatures<S>, DecayError> {
        self.window(w)?;
        let artifacts = &self.windows[&w];
        let spec = artifacts.spec.clone();
        let standardizer = artifacts.standardizer.clone();
        let incident_indices = self.incidents_in_range(self.config.month_range(month));
        if incident_indices.is_empty() {
            return Err(DecayError::EmptyMonth(month));
        }
        let set = self.assemble(&incident_indices, &spec);
        Ok(MonthFeatures {
            content: set.content,
            context: standardizer.apply(&set.context_raw),
            alert_labels: set.alert_labels,
        })
    }

    #[allow(clippy::type_complexity)]
    fn eval_winner_on_month(
        &mut self,
        w: usize,
        month: usize,
    ) -> Result<
        (
            CandidateMetrics,
            f64,
            Vec<(f64, f64)>,
            Vec<(f64, f64)>,
            Candidate,
        ),
        DecayError,
    > {
        let scored = self.score_month(w, month)?;
        let metrics =
            crate::ensemble::candidate_metrics(&scored.incident_scores, &scored.incident_labels)?;
        let curve = MetricCurve::from_scores(&scored.incident_scores, &scored.incident_labels)?;
        let positives = scored.incident_labels.iter().filter(|&&l| l).count();
        let baseline = positives as f64 / scored.incident_labels.len() as f64;
        Ok((
            metrics,
            baseline,
            curve.roc_points(),
            curve.pr_points(),
            scored.winner,
        ))
    }

    /// FIXED scenario: one window, frozen winner carried into later months.
    pub fn fixed_report(&mut self) -> Result<DecayReport, DecayError> {
        let mut rows = Vec::with_capacity(3);
        for (i, month) in self.config.test_months().into_iter().enumerate() {
            let (metrics, baseline, roc, pr, winner) = self.eval_winner_on_month(0, month)?;
            rows.push(DecayRow {
                scenario: Scenario::Fixed,
                test_month: i + 1,
                winner,
                metrics,
                baseline_precision: baseline,
                roc_points: roc,
                pr_points: pr,
            });
        }
        Ok(DecayReport {
            scenario: Scenario::Fixed,
            rows,
        })
    }

    /// RETRAIN scenario: the window slides one month per test month, with a
    /// full zoo rebuild and reselection each time.
    pub fn retraining_report(&mut self) -> Result<DecayReport, DecayError> {
        let mut rows = Vec::with_capacity(3);
        for (i, month) in self.config.test_months().into_iter().enumerate() {
            let (metrics, baseline, roc, pr, winner) = self.eval_winner_on_month(i, month)?;
            rows.push(DecayRow {
                scenario: Scenario::Retrain,
                test_month: i + 1,
                winner,
                metrics,
                baseline_precision: baseline,
                roc_points: roc,
                pr_points: pr,
            });
        }
        Ok(DecayReport {
            scenario: Scenario::Retrain,
            rows,
        })
    }
}

/// One-shot FIXED run.
pub fn run_fixed_decay<S: Scalar>(
    alerts: &[RawAlert],
    incidents: &[Incident],
    config: DecayConfig,
) -> Result<DecayReport, DecayError> {
    DecayExperiment::<S>::new(alerts, incidents, config)?.fixed_report()
}

/// One-shot RETRAIN run.
pub fn run_sliding_retraining<S: Scalar>(
    alerts: &[RawAlert],
    incidents: &[Incident],
    config: DecayConfig,
) -> Result<DecayReport, DecayError> {
    DecayExperiment::<S>::new(alerts, incidents, config)?.retraining_report()
}

/// Row-per-month metrics table as CSV.
pub fn decay_metrics_csv(reports: &[&DecayReport]) -> String {
    let mut out = String::from(
        "scenario,test_month,winner,roc_auc,pr_auc,precision_at_90,precision_at_95,precision_at_99,baseline_precision\n",
    );
    for report in reports {
        for row in &report.rows {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                row.scenario.name(),
                row.test_month,
                row.winner,
                row.metrics.roc_auc,
                row.metrics.pr_auc,
                row.metrics.precision_at_90,
                row.metrics.precision_at_95,
                row.metrics.precision_at_99,
                row.baseline_precision,
            ));
        }
    }
    out
}

/// ROC and P-R point series per scenario-month as CSV.
pub fn decay_curves_csv(reports: &[&DecayReport]) -> String {
    let mut out = String::from("scenario,test_month,curve,x,y\n");
    for report in reports {
        for row in &report.rows {
            for &(x, y) in &row.roc_points {
                out.push_str(&format!(
                    "{},{},roc,{x:.6},{y:.6}\n",
                    row.scenario.name(),
                    row.test_month
                ));
            }
            for &(x, y) in &row.pr_points {
                out.push_str(&format!(
                    "{},{},pr,{x:.6},{y:.6}\n",
                    row.scenario.name(),
                    row.test_month
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alert::{attach_labels, group_incidents};
    use crate::synth::{generate_dataset, SynthConfig};

    fn small_synth(drift: bool) -> (Vec<RawAlert>, Vec<Incident>, DecayConfig) {
        let mut config = SynthConfig {
            months: 8,
            customers: 40,
            sensors: 15,
            incidents_per_month: 170,
            bursts_per_month: 1,
            burst_incidents: 5,
            ..SynthConfig::default()
        };
        if drift {
            config = SynthConfig {
                drift: SynthConfig::drift_shock().drift,
                ..config
            };
        }
        let data = generate_dataset(&config).unwrap();
        let mut incidents = group_incidents(&data.alerts);
        let records = data
            .incident_records
            .iter()
            .map(|r| (r.incident_id.clone(), r.clone()))
            .collect();
        attach_labels(&mut incidents, &records).unwrap();
        let mut decay_config = DecayConfig::new(config.origin_time, 7);
        // Small corpora need a lower vocabulary threshold to keep signal.
        decay_config.rare_threshold = 10;
        (data.alerts, incidents, decay_config)
    }

    #[test]
    fn insufficient_span_is_rejected() {
        let (alerts, incidents, config) = small_synth(false);
        let mut short = config.clone();
        short.train_months = 7;
        assert!(matches!(
            DecayExperiment::<f64>::new(&alerts, &incidents, short),
            Err(DecayError::InsufficientSpan { needed: 10, .. })
        ));
        drop((alerts, incidents, config));
    }

    #[test]
    fn drift_free_decay_is_flat_and_scenarios_agree_on_month_one() {
        let (alerts, incidents, config) = small_synth(false);
        let mut exp = DecayExperiment::<f64>::new(&alerts, &incidents, config).unwrap();
        let fixed = exp.fixed_report().unwrap();
        let retrain = exp.retraining_report().unwrap();
        assert_eq!(fixed.rows.len(), 3);
        assert_eq!(retrain.rows.len(), 3);
        // Same window-0 artifacts: month 1 must agree exactly.
        assert_eq!(fixed.rows[0].winner, retrain.rows[0].winner);
        assert_eq!(
            fixed.rows[0].metrics.roc_auc.to_bits(),
            retrain.rows[0].metrics.roc_auc.to_bits()
        );
        assert_eq!(
            fixed.rows[0].metrics.pr_auc.to_bits(),
            retrain.rows[0].metrics.pr_auc.to_bits()
        );
        // Without drift the frozen model holds up across months. The band is
        // generous because this corpus is small; the acceptance suite checks
        // the full-scale dataset at a tighter one.
        for row in &fixed.rows {
            assert!(
                (row.metrics.roc_auc - fixed.rows[0].metrics.roc_auc).abs() < 0.12,
                "fixed decay drifted without drift: {:?}",
                fixed
                    .rows
                    .iter()
                    .map(|r| r.metrics.roc_auc)
                    .collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn drift_shock_decays_fixed_and_retraining_recovers() {
        let (alerts, incidents, config) = small_synth(true);
        let mut exp = DecayExperiment::<f64>::new(&alerts, &incidents, config).unwrap();
        let fixed = exp.fixed_report().unwrap();
        let retrain = exp.retraining_report().unwrap();
        let f: Vec<f64> = fixed.rows.iter().map(|r| r.metrics.roc_auc).collect();
        let r: Vec<f64> = retrain.rows.iter().map(|r| r.metrics.roc_auc).collect();
        assert!(f[0] - f[1] >= 0.05, "fixed should drop: {f:?}");
        assert!(
            r[1] - f[1] >= 0.05,
            "retrain should beat fixed in month 2: {r:?} vs {f:?}"
        );
        assert!(
            r[2] - f[2] >= 0.05,
            "retrain should beat fixed in month 3: {r:?} vs {f:?}"
        );
    }

    #[test]
    fn csv_outputs_are_well_formed() {
        let (alerts, incidents, config) = small_synth(false);
        let mut exp = DecayExperiment::<f64>::new(&alerts, &incidents, config).unwrap();
        let fixed = exp.fixed_report().unwrap();
        let metrics_csv = decay_metrics_csv(&[&fixed]);
        assert_eq!(metrics_csv.lines().count(), 4);
        let curves_csv = decay_curves_csv(&[&fixed]);
        assert!(curves_csv.lines().count() > 10);
        assert!(curves_csv
            .lines()
            .skip(1)
            .all(|l| l.split(',').count() == 5));
    }
}
