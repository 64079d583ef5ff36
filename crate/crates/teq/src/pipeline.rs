//! End-to-end orchestration: featurize -> context -> zoo -> select ->
//! triage -> decay -> explain, one run directory of reports per invocation.
//!
//! The run is deterministic from the config seed: reports and the manifest
//! contain no wall-clock state, so re-running the same config over the same
//! dataset reproduces every output byte.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alert::{
    attach_labels, group_incidents, load_alerts, load_incident_records, Incident, IngestStats,
    RawAlert, RecordPolicy,
};
use crate::context::ContextConfig;
use crate::decay::{
    decay_curves_csv, decay_metrics_csv, DecayConfig, DecayError, DecayExperiment, DecayReport,
};
use crate::ensemble::{zoo_metrics_csv, Candidate, SelectionReport};
use crate::explain::{
    permutation_importance, permutation_report, shapley_report, ImportanceMetric, ImportanceReport,
};
use crate::matrix::DenseMatrix;
use crate::metrics::roc_auc;
use crate::synth::load_ground_truth;
use crate::triage::{
    daily_suppression, mean_actionable_queue_time, queue_times_csv, rank_alerts_within_incident,
    select_threshold_at_recall, slice_incidents, suppress_incidents, suppression_csv,
    OrderingPolicy, OrderingReport, SliceQueueTimes, SuppressionReport, TriageIncident,
    TriageReport, ALL_POLICIES,
};
use crate::util::{derive_seed, fnv64};
use crate::Real;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

fn stage<E: std::error::Error + Send + Sync + 'static>(
    name: &'static str,
) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage: name,
        source: Box::new(e),
    }
}

fn decay_stage(e: DecayError) -> PipelineError {
    let stage_name = match &e {
        DecayError::Featurize(_) => "featurize",
        DecayError::Context(_) => "context",
        DecayError::Zoo(_) => "zoo",
        _ => "experiment-setup",
    };
    PipelineError::Stage {
        stage: stage_name,
        source: Box::new(e),
    }
}

/// Full pipeline configuration. Dataset paths are mandatory; everything else
/// has defaults matching the bundled experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub alerts_path: String,
    pub incidents_path: String,
    #[serde(default)]
    pub ground_truth_path: Option<String>,
    pub out_dir: String,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::rare_threshold")]
    pub rare_threshold: usize,
    /// Context look-back windows in seconds.
    #[serde(default = "defaults::windows")]
    pub windows: Vec<u64>,
    #[serde(default = "defaults::month_secs")]
    pub month_secs: u64,
    /// Start of month 0; derived from the earliest incident when absent.
    #[serde(default)]
    pub origin_time: Option<i64>,
    #[serde(default = "defaults::train_months")]
    pub train_months: usize,
    /// Queue slice durations in hours.
    #[serde(default = "defaults::slices_hours")]
    pub slices_hours: Vec<u64>,
    #[serde(default = "defaults::target_recall")]
    pub target_recall: f64,
    #[serde(default = "defaults::explain_repeats")]
    pub explain_repeats: usize,
    #[serde(default = "defaults::explain_sample_rows")]
    pub explain_sample_rows: usize,
    #[serde(default = "defaults::shapley_points")]
    pub shapley_points: usize,
    #[serde(default = "defaults::shapley_samples")]
    pub shapley_samples: usize,
    #[serde(default)]
    pub record_policy: RecordPolicy,
}

mod defaults {
    pub fn seed() -> u64 {
        20_220_101
    }
    pub fn rare_threshold() -> usize {
        crate::featurize::DEFAULT_RARE_THRESHOLD
    }
    pub fn windows() -> Vec<u64> {
        crate::context::DEFAULT_WINDOWS.to_vec()
    }
    pub fn month_secs() -> u64 {
        2_592_000
    }
    pub fn train_months() -> usize {
        5
    }
    pub fn slices_hours() -> Vec<u64> {
        vec![1, 4, 24, 744]
    }
    pub fn target_recall() -> f64 {
        0.95
    }
    pub fn explain_repeats() -> usize {
        3
    }
    pub fn explain_sample_rows() -> usize {
        2_000
    }
    pub fn shapley_points() -> usize {
        20
    }
    pub fn shapley_samples() -> usize {
        200
    }
}

impl PipelineConfig {
    pub fn new(alerts_path: &str, incidents_path: &str, out_dir: &str) -> Self {
        Self {
            alerts_path: alerts_path.into(),
            incidents_path: incidents_path.into(),
            ground_truth_path: None,
            out_dir: out_dir.into(),
            seed: defaults::seed(),
            rare_threshold: defaults::rare_threshold(),
            windows: defaults::windows(),
            month_secs: defaults::month_secs(),
            origin_time: None,
            train_months: defaults::train_months(),
            slices_hours: defaults::slices_hours(),
            target_recall: defaults::target_recall(),
            explain_repeats: defaults::explain_repeats(),
            explain_sample_rows: defaults::explain_sample_rows(),
            shapley_points: defaults::shapley_points(),
            shapley_samples: defaults::shapley_samples(),
            record_policy: RecordPolicy::Skip,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.alerts_path.is_empty() || self.incidents_path.is_empty() {
            return Err(PipelineError::Config(
                "alerts_path and incidents_path are required".into(),
            ));
        }
        if self.out_dir.is_empty() {
            return Err(PipelineError::Config("out_dir is required".into()));
        }
        if !(self.target_recall > 0.0 && self.target_recall <= 1.0) {
            return Err(PipelineError::Config(
                "target_recall must be in (0, 1]".into(),
            ));
        }
        if self.train_months == 0 || self.slices_hours.is_empty() || self.windows.is_empty() {
            return Err(PipelineError::Config(
                "train_months, slices_hours, and windows must be nonempty".into(),
            ));
        }
        Ok(())
    }

    /// Parse a config document, validating before any work happens.
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let config: PipelineConfig =
            serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| PipelineError::Config(format!("read config: {e}")))?;
        Self::from_json(&text)
    }
}

/// Both importance methods over the best content model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CombinedImportance {
    pub model: Candidate,
    pub permutation: ImportanceReport,
    pub shapley: ImportanceReport,
}

/// A selected model packaged with everything needed to score a raw alert
/// stream: the fitted featurization, the context window ladder, and the
/// train-fitted context standardizer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeployableModel {
    pub version: u32,
    pub candidate: Candidate,
    pub bundle: crate::ensemble::WinnerBundle<Real>,
    pub spec: crate::featurize::FeatureSpec,
    pub standardizer: crate::featurize::Standardizer,
    pub windows: Vec<u64>,
}

impl DeployableModel {
    const VERSION: u32 = 1;

    /// Alert-level scores for a chronological stream, aligned with input
    /// order. Context features look back over the whole stream, so callers
    /// pass full history even when only a suffix is of interest.
    pub fn score_stream(&self, alerts: &[RawAlert]) -> Result<Vec<Real>, PipelineError> {
        let flats: Vec<crate::featurize::FlatRecord> = alerts
            .iter()
            .map(|a| crate::featurize::flatten_document(&a.body))
            .collect::<Result<_, _>>()
            .map_err(stage("score"))?;
        let content = crate::featurize::transform_batch::<Real>(&flats, &self.spec);
        let config = ContextConfig::with_windows(self.windows.clone());
        let vectors = crate::context::compute_context_stream::<Real>(alerts, &config)
            .map_err(stage("score"))?;
        let mut context_raw = DenseMatrix::with_width(config.width());
        for v in &vectors {
            context_raw.push_row(&v.values);
        }
        let context = self.standardizer.apply(&context_raw);
        self.bundle
            .score_alerts(&content, &context)
            .map_err(stage("score"))
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), PipelineError> {
        std::fs::write(path, serde_json::to_string(self).expect("model serializes"))
            .map_err(stage("report"))
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(stage("score"))?;
        let model: DeployableModel = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("corrupt model file: {e}")))?;
        if model.version != Self::VERSION {
            return Err(PipelineError::Config(format!(
                "unsupported model file version {}",
                model.version
            )));
        }
        Ok(model)
    }
}

/// Deterministic run manifest: config echo, ingest stats, output hashes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: PipelineConfig,
    pub ingest: IngestStats,
    pub alerts: usize,
    pub incidents: usize,
    pub origin_time: i64,
    /// `(relative path, fnv64 of contents)` per written report.
    pub outputs: Vec<(String, String)>,
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub selection: SelectionReport,
    pub triage: TriageReport,
    pub decay_fixed: DecayReport,
    pub decay_retrain: DecayReport,
    pub importance: CombinedImportance,
    pub manifest: Manifest,
    pub out_dir: PathBuf,
}

struct ReportWriter {
    dir: PathBuf,
    outputs: Vec<(String, String)>,
}

impl ReportWriter {
    fn new(dir: &Path) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(dir).map_err(stage("report"))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), PipelineError> {
        std::fs::write(self.dir.join(name), contents).map_err(stage("report"))?;
        self.outputs.push((
            name.to_string(),
            format!("{:016x}", fnv64(contents.as_bytes())),
        ));
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Stage {
            stage: "report",
            source: Box::new(e),
        })?;
        self.write(name, &text)
    }
}

/// Run every stage over an already-generated dataset and write all reports
/// under `config.out_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    config.validate()?;

    // Ingest.
    let (alerts, ingest_stats) =
        load_alerts(&config.alerts_path, config.record_policy).map_err(stage("ingest"))?;
    let records = load_incident_records(&config.incidents_path).map_err(stage("ingest"))?;
    let ground_truth = match &config.ground_truth_path {
        Some(path) => Some(load_ground_truth(path).map_err(stage("ingest"))?),
        None => None,
    };

    // Group and label.
    let mut incidents = group_incidents(&alerts);
    attach_labels(&mut incidents, &records).map_err(stage("group"))?;
    let origin = config
        .origin_time
        .or_else(|| incidents.iter().map(|i| i.anchor_time).min())
        .ok_or_else(|| PipelineError::Config("dataset contains no incidents".into()))?;

    // Featurization, context features, and the window-0 zoo live inside the
    // shared experiment state.
    let decay_config = DecayConfig {
        origin,
        month_secs: config.month_secs,
        train_months: config.train_months,
        seed: config.seed,
        rare_threshold: config.rare_threshold,
        context: ContextConfig::with_windows(config.windows.clone()),
    };
    let mut experiment =
        DecayExperiment::<Real>::new(&alerts, &incidents, decay_config).map_err(decay_stage)?;

    let mut writer = ReportWriter::new(Path::new(&config.out_dir))?;

    // Zoo + selection on the first window.
    let (selection, deployable, feature_names) = {
        let artifacts = &experiment.window(0).map_err(decay_stage)?;
        let deployable = DeployableModel {
            version: DeployableModel::VERSION,
            candidate: artifacts.selection.winner,
            bundle: artifacts.zoo.winner_bundle(artifacts.selection.winner),
            spec: artifacts.spec.clone(),
            standardizer: artifacts.standardizer.clone(),
            windows: config.windows.clone(),
        };
        (
            artifacts.selection.clone(),
            deployable,
            artifacts.spec.feature_names(),
        )
    };
    writer.write("feature_spec.json", &deployable.spec.to_json())?;
    writer.write_json("selection_report.json", &selection)?;
    writer.write("zoo_metrics.csv", &zoo_metrics_csv(&selection))?;
    writer.write(
        "winner_model.json",
        &serde_json::to_string(&deployable).expect("winner serializes"),
    )?;

    // Triage: threshold fitted on the selection month, simulation over the
    // two months after it.
    let triage = run_triage_stage(
        config,
        &mut experiment,
        &alerts,
        &incidents,
        ground_truth.as_ref(),
    )
    .map_err(stage_to_pipeline)?;
    writer.write_json("triage_report.json", &triage)?;
    writer.write("queue_times.csv", &queue_times_csv(&triage))?;
    writer.write("suppression_daily.csv", &suppression_csv(&triage))?;

    // Decay experiments (window 0 is already cached).
    let decay_fixed = experiment.fixed_report().map_err(decay_stage)?;
    let decay_retrain = experiment.retraining_report().map_err(decay_stage)?;
    writer.write_json(
        "decay_report.json",
        &serde_json::json!({ "fixed": &decay_fixed, "retrain": &decay_retrain }),
    )?;
    writer.write(
        "decay_metrics.csv",
        &decay_metrics_csv(&[&decay_fixed, &decay_retrain]),
    )?;
    writer.write(
        "decay_curves.csv",
        &decay_curves_csv(&[&decay_fixed, &decay_retrain]),
    )?;

    // Explainability on the best content model over the selection month.
    let importance = run_explain_stage(config, &mut experiment, &selection, &feature_names)
        .map_err(stage_to_pipeline)?;
    writer.write_json("importance_report.json", &importance)?;

    let manifest = Manifest {
        tool: "teq".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed,
        config: config.clone(),
        ingest: ingest_stats,
        alerts: alerts.len(),
        incidents: incidents.len(),
        origin_time: origin,
        outputs: writer.outputs.clone(),
    };
    writer.write_json("manifest.json", &manifest)?;
    let out_dir = writer.dir.clone();

    Ok(PipelineOutcome {
        selection,
        triage,
        decay_fixed,
        decay_retrain,
        importance,
        manifest,
        out_dir,
    })
}

/// Internal stage error carrying its stage tag.
enum StageError {
    Decay(DecayError),
    Tagged(&'static str, Box<dyn std::error::Error + Send + Sync>),
}

fn stage_to_pipeline(e: StageError) -> PipelineError {
    match e {
        StageError::Decay(d) => decay_stage(d),
        StageError::Tagged(stage, source) => PipelineError::Stage { stage, source },
    }
}

fn tag<E: std::error::Error + Send + Sync + 'static>(
    name: &'static str,
) -> impl FnOnce(E) -> StageError {
    move |e| StageError::Tagged(name, Box::new(e))
}

fn run_triage_stage(
    config: &PipelineConfig,
    experiment: &mut DecayExperiment<'_, Real>,
    alerts: &[RawAlert],
    incidents: &[Incident],
    ground_truth: Option<&HashMap<String, crate::synth::GroundTruthRecord>>,
) -> Result<TriageReport, StageError> {
    let selection_month = config.train_months;
    let validation = experiment
        .score_month(0, selection_month)
        .map_err(StageError::Decay)?;
    let fit = select_threshold_at_recall(
        &validation.incident_scores,
        &validation.incident_labels,
        config.target_recall,
    )
    .map_err(tag("triage"))?;

    // Severity per incident: max over member alerts.
    let severity_of: HashMap<&str, f64> = alerts
        .iter()
        .map(|a| (a.alert_id.as_str(), a.severity))
        .collect();
    let incident_severity = |inc: &Incident| -> f64 {
        inc.alert_ids
            .iter()
            .map(|id| severity_of[id.as_str()])
            .fold(0.0, f64::max)
    };

    // Simulation months: the two months after the selection month.
    let sim_months = [selection_month + 1, selection_month + 2];
    let mut triage_incidents: Vec<TriageIncident> = Vec::new();
    let mut sim_incident_indices: Vec<usize> = Vec::new();
    let mut alert_score_map: HashMap<String, f64> = HashMap::new();
    for &month in &sim_months {
        let scored = experiment
            .score_month(0, month)
            .map_err(StageError::Decay)?;
        for (pos, &inc_idx) in scored.incident_indices.iter().enumerate() {
            let inc = &incidents[inc_idx];
            triage_incidents.push(TriageIncident {
                incident_id: inc.incident_id.clone(),
                created_time: inc.created_time,
                queue_time: inc.queue_time.unwrap_or(0.0),
                actionable: inc.label.unwrap_or(false),
                severity: incident_severity(inc),
                score: scored.incident_scores[pos],
            });
        }
        sim_incident_indices.extend(&scored.incident_indices);
        for (id, score) in scored.alert_ids.iter().zip(&scored.alert_scores) {
            alert_score_map.insert(id.clone(), *score);
        }
    }
    let range = (
        experiment.config.month_range(sim_months[0]).0,
        experiment.config.month_range(sim_months[1]).1,
    );

    // Queue-time simulation per slice duration.
    let mut queue_times = Vec::new();
    for &hours in &config.slices_hours {
        let slice_secs = hours * 3_600;
        let slices = slice_incidents(&triage_incidents, range, slice_secs);
        let mut means = Vec::new();
        let mut by_policy: HashMap<&str, f64> = HashMap::new();
        for policy in ALL_POLICIES {
            let mean = mean_actionable_queue_time(&slices, policy)
                .map_err(tag("triage"))?
                .unwrap_or(f64::NAN);
            by_policy.insert(policy.name(), mean);
            means.push((policy.name().to_string(), mean));
        }
        let baseline = by_policy[OrderingPolicy::Baseline.name()];
        let teq = by_policy[OrderingPolicy::Teq.name()];
        let saving = if baseline > 0.0 {
            (baseline - teq) / baseline
        } else {
            0.0
        };
        queue_times.push(SliceQueueTimes {
            slice_secs,
            slices: slices.len(),
            means,
            teq_saving_vs_baseline: saving,
        });
    }

    // Suppression over the simulation months with the validation-fitted
    // threshold.
    let suppression_run =
        suppress_incidents(&triage_incidents, fit.threshold).map_err(tag("triage"))?;
    let daily =
        daily_suppression(&triage_incidents, fit.threshold, range.0).map_err(tag("triage"))?;
    let suppression = SuppressionReport {
        target_recall: config.target_recall,
        threshold: fit.threshold,
        fit_recall: fit.achieved_recall,
        leakage_flag: false,
        holdout: suppression_run.counts,
        daily,
    };

    // Within-incident ordering against planted evidence, when ground truth
    // is available.
    let ordering = match ground_truth {
        None => None,
        Some(gt) => {
            let mut rank_sum_teq = 0u64;
            let mut rank_sum_chrono = 0u64;
            let mut counted = 0usize;
            for &inc_idx in &sim_incident_indices {
                let inc = &incidents[inc_idx];
                let Some(record) = gt.get(&inc.incident_id) else {
                    continue;
                };
                let Some(evidence) = record.evidence_alert_id.as_deref() else {
                    continue;
                };
                let ranking = rank_alerts_within_incident(inc, &alert_score_map, Some(evidence))
                    .map_err(tag("triage"))?;
                let Some(rank) = ranking.evidence_rank else {
                    continue;
                };
                let chrono = inc
                    .alert_ids
                    .iter()
                    .position(|id| id == evidence)
                    .map(|p| p + 1);
                let Some(chrono_rank) = chrono else { continue };
                rank_sum_teq += rank as u64;
                rank_sum_chrono += chrono_rank as u64;
                counted += 1;
            }
            (counted > 0).then(|| OrderingReport {
                incidents: counted,
                rank_sum_teq,
                rank_sum_chronological: rank_sum_chrono,
                mean_rank_teq: rank_sum_teq as f64 / counted as f64,
                mean_rank_chronological: rank_sum_chrono as f64 / counted as f64,
            })
        }
    };

    Ok(TriageReport {
        queue_times,
        suppression,
        ordering,
    })
}

fn run_explain_stage(
    config: &PipelineConfig,
    experiment: &mut DecayExperiment<'_, Real>,
    selection: &SelectionReport,
    feature_names: &[String],
) -> Result<CombinedImportance, StageError> {
    // The paper-style analysis explains the best content model.
    let best_content = selection
        .candidates
        .iter()
        .filter(|c| matches!(c.candidate, Candidate::Content { .. }))
        .max_by(|a, b| {
            a.metrics
                .roc_auc
                .partial_cmp(&b.metrics.roc_auc)
                .expect("finite")
        })
        .map(|c| c.candidate)
        .expect("zoo always scores content candidates");
    let selection_month = config.train_months;
    let features = experiment
        .month_features(0, selection_month)
        .map_err(StageError::Decay)?;
    let model = {
        let artifacts = experiment.window(0).map_err(StageError::Decay)?;
        match best_content {
            Candidate::Content { algo } => artifacts.zoo.content_model(algo).clone(),
            _ => unreachable!("filtered to content candidates"),
        }
    };

    // Deterministic row sample keeps the explain stage inside its budget.
    let take = features.content.rows().min(config.explain_sample_rows);
    let sample_rows: Vec<usize> = sample_indices(
        features.content.rows(),
        take,
        derive_seed(config.seed, &[0x657870]),
    );
    let sample = features.content.select_rows(&sample_rows);
    let labels: Vec<bool> = sample_rows
        .iter()
        .map(|&i| features.alert_labels[i])
        .collect();

    let predict_batch = |m: &DenseMatrix<Real>| -> Vec<Real> {
        model.predict_proba(m).expect("width fixed by construction")
    };
    let importances = permutation_importance(
        predict_batch,
        &sample,
        &labels,
        ImportanceMetric::RocAuc,
        config.explain_repeats,
        derive_seed(config.seed, &[0x7065726d]),
    )
    .map_err(tag("explain"))?;
    let baseline = roc_auc(&predict_batch(&sample), &labels).map_err(tag("explain"))?;
    let permutation = permutation_report(
        feature_names,
        &importances,
        baseline,
        config.explain_repeats,
    );

    let points =
        sample.select_rows(&(0..sample.rows().min(config.shapley_points)).collect::<Vec<_>>());
    let background_rows: Vec<usize> = sample_indices(
        sample.rows(),
        sample.rows().min(100),
        derive_seed(config.seed, &[0x6267]),
    );
    let background = sample.select_rows(&background_rows);
    let predict_one =
        |row: &[Real]| -> Real { model.predict_one(row).expect("width fixed by construction") };
    let shapley = shapley_report(
        predict_one,
        &points,
        &background,
        feature_names,
        config.shapley_samples,
        derive_seed(config.seed, &[0x73686170]),
    )
    .map_err(tag("explain"))?;

    Ok(CombinedImportance {
        model: best_content,
        permutation,
        shapley,
    })
}

/// First `take` indices of a seeded shuffle of `0..n`.
fn sample_indices(n: usize, take: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    indices.truncate(take);
    indices
}
