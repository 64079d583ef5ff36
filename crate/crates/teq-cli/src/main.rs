//! `teq` command line: synthetic data generation, featurization, context
//! features, model training, zoo selection, triage simulation, decay
//! experiments, explainability, and the end-to-end pipeline.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use teq::alert::{
    attach_labels, group_incidents, load_alerts, load_incident_records, Incident, RawAlert,
    RecordPolicy,
};
use teq::context::{compute_context_stream, ContextConfig};
use teq::decay::{decay_curves_csv, decay_metrics_csv, DecayConfig, DecayExperiment, DecayReport};
use teq::ensemble::{build_zoo, select_best, zoo_metrics_csv, ZooTestSet};
use teq::explain::{permutation_importance, permutation_report, shapley_report, ImportanceMetric};
use teq::featurize::{
    fit_feature_spec, flatten_document, transform_record, FeatureSpec, FeatureVector, Standardizer,
    DEFAULT_RARE_THRESHOLD,
};
use teq::learners::{load_model, save_model, train, Algorithm, TrainConfig, TrainedModel};
use teq::matrix::DenseMatrix;
use teq::pipeline::{run_pipeline, DeployableModel, PipelineConfig};
use teq::synth::{generate_dataset, load_ground_truth, SynthConfig};
use teq::triage::{
    daily_suppression, mean_actionable_queue_time, queue_times_csv, rank_alerts_within_incident,
    select_threshold_at_recall, slice_incidents, suppress_incidents, suppression_csv,
    OrderingPolicy, OrderingReport, SliceQueueTimes, SuppressionReport, TriageIncident,
    TriageReport, ALL_POLICIES,
};
use teq::Real;

#[derive(Parser)]
#[command(name = "teq", version, about = "Alert triage experimentation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic SOC dataset.
    Synth(SynthArgs),
    /// Fit a feature spec or transform alerts into content feature vectors.
    Featurize(FeaturizeArgs),
    /// Compute temporal context feature vectors for an alert stream.
    Context(ContextArgs),
    /// Train one alert-level model on content or context features.
    Train(TrainArgs),
    /// Train the full model zoo and select the best candidate.
    Zoo(ZooArgs),
    /// Simulate triage: queue times, suppression, within-incident ordering.
    Triage(TriageArgs),
    /// Run the fixed and sliding-retraining decay experiments.
    Decay(DecayArgs),
    /// Feature attributions for a trained model.
    Explain(ExplainArgs),
    /// Run every stage end to end from a config file.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for alerts.jsonl, incidents.jsonl, ground_truth.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Config preset; a config file overrides it.
    #[arg(long, value_enum, default_value = "default")]
    preset: SynthPreset,
    /// JSON file with a full SynthConfig.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    months: Option<usize>,
    #[arg(long)]
    customers: Option<usize>,
    #[arg(long)]
    sensors: Option<usize>,
    #[arg(long)]
    incidents_per_month: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthPreset {
    Default,
    DriftShock,
}

#[derive(Args)]
struct FeaturizeArgs {
    /// Line-delimited alert file.
    #[arg(long)]
    alerts: PathBuf,
    /// Fit a new spec and write it here.
    #[arg(long, conflicts_with = "transform")]
    fit: Option<PathBuf>,
    /// Transform alerts with an existing spec and write vectors here.
    #[arg(long, requires = "spec")]
    transform: Option<PathBuf>,
    /// Fitted spec file (for --transform).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_RARE_THRESHOLD)]
    rare_threshold: usize,
    /// Restrict fitting to alerts inside this time range (START:END, unix
    /// seconds, half-open).
    #[arg(long, value_parser = parse_range)]
    range: Option<(i64, i64)>,
}

#[derive(Args)]
struct ContextArgs {
    #[arg(long)]
    alerts: PathBuf,
    /// Output feature vector file.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated window ladder in seconds.
    #[arg(long, value_delimiter = ',')]
    windows: Option<Vec<u64>>,
}

#[derive(Args)]
struct TrainArgs {
    /// Which feature set the model consumes.
    #[arg(long, value_enum)]
    task: TaskKind,
    #[arg(long)]
    algo: Algorithm,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    alerts: PathBuf,
    #[arg(long)]
    incidents: PathBuf,
    /// Feature vectors for the chosen task.
    #[arg(long)]
    features: PathBuf,
    /// Incidents anchored in this range supply the training alerts.
    #[arg(long, value_parser = parse_range)]
    train_range: (i64, i64),
    #[arg(long)]
    out: PathBuf,
    /// Standardize features with train statistics before fitting (context
    /// features need this; content vectors are already standardized).
    #[arg(long, default_value_t = false)]
    standardize: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskKind {
    Content,
    Context,
}

#[derive(Args)]
struct ZooArgs {
    #[arg(long)]
    alerts: PathBuf,
    #[arg(long)]
    incidents: PathBuf,
    #[arg(long)]
    content_features: PathBuf,
    #[arg(long)]
    context_features: PathBuf,
    #[arg(long, value_parser = parse_range)]
    train_range: (i64, i64),
    #[arg(long, value_parser = parse_range)]
    test_range: (i64, i64),
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TriageArgs {
    #[arg(long)]
    alerts: PathBuf,
    #[arg(long)]
    incidents: PathBuf,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Deployable winner model (winner_model.json from zoo/pipeline).
    #[arg(long)]
    winner: PathBuf,
    /// Threshold fit range (validation month preceding the triage range).
    #[arg(long, value_parser = parse_range)]
    validation_range: (i64, i64),
    /// Simulation range.
    #[arg(long, value_parser = parse_range)]
    triage_range: (i64, i64),
    /// Comma-separated slice durations in hours, `h` suffix optional.
    #[arg(long, value_delimiter = ',', value_parser = parse_slice_hours, default_value = "1h,4h,24h,744h")]
    slices: Vec<u64>,
    #[arg(long, default_value_t = 0.95)]
    target_recall: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DecayArgs {
    #[arg(long)]
    alerts: PathBuf,
    #[arg(long)]
    incidents: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    mode: DecayMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_RARE_THRESHOLD)]
    rare_threshold: usize,
    /// Start of month 0; defaults to the earliest incident anchor.
    #[arg(long)]
    origin: Option<i64>,
    #[arg(long, default_value_t = 2_592_000)]
    month_secs: u64,
    #[arg(long, default_value_t = 5)]
    train_months: usize,
    #[arg(long, value_delimiter = ',')]
    windows: Option<Vec<u64>>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecayMode {
    Fixed,
    Retrain,
    Both,
}

#[derive(Args)]
struct ExplainArgs {
    /// perm or shapley.
    #[arg(long, value_enum)]
    method: ExplainMethod,
    /// Trained model file (from `teq train`).
    #[arg(long)]
    model: PathBuf,
    /// Feature vectors matching the model's width.
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    alerts: PathBuf,
    #[arg(long)]
    incidents: PathBuf,
    /// Incidents anchored here supply the evaluation alerts.
    #[arg(long, value_parser = parse_range)]
    range: (i64, i64),
    /// Feature spec for readable feature names (optional).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 10)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExplainMethod {
    Perm,
    Shapley,
}

#[derive(Args)]
struct PipelineArgs {
    /// Pipeline config file; see --emit-default-config.
    #[arg(long, required_unless_present = "emit_default_config")]
    config: Option<PathBuf>,
    /// Print a config template to stdout and exit.
    #[arg(long)]
    emit_default_config: bool,
}

fn parse_range(text: &str) -> Result<(i64, i64), String> {
    let (start, end) = text
        .split_once(':')
        .ok_or_else(|| format!("range '{text}' must be START:END in unix seconds"))?;
    let start: i64 = start
        .trim()
        .parse()
        .map_err(|e| format!("range start: {e}"))?;
    let end: i64 = end.trim().parse().map_err(|e| format!("range end: {e}"))?;
    if start >= end {
        return Err(format!("range start {start} must precede end {end}"));
    }
    Ok((start, end))
}

fn parse_slice_hours(text: &str) -> Result<u64, String> {
    let hours = text.trim().strip_suffix('h').unwrap_or(text.trim());
    hours
        .parse::<u64>()
        .map_err(|e| format!("slice '{text}': {e}"))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth(args) => cmd_synth(args),
        Command::Featurize(args) => cmd_featurize(args),
        Command::Context(args) => cmd_context(args),
        Command::Train(args) => cmd_train(args),
        Command::Zoo(args) => cmd_zoo(args),
        Command::Triage(args) => cmd_triage(args),
        Command::Decay(args) => cmd_decay(args),
        Command::Explain(args) => cmd_explain(args),
        Command::Pipeline(args) => cmd_pipeline(args),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("read config {}", path.display()))?;
            serde_json::from_str(&text).context("parse synth config")?
        }
        None => match args.preset {
            SynthPreset::Default => SynthConfig::default(),
            SynthPreset::DriftShock => SynthConfig::drift_shock(),
        },
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(months) = args.months {
        config.months = months;
    }
    if let Some(customers) = args.customers {
        config.customers = customers;
    }
    if let Some(sensors) = args.sensors {
        config.sensors = sensors;
    }
    if let Some(ipm) = args.incidents_per_month {
        config.incidents_per_month = ipm;
    }
    let data = generate_dataset(&config)?;
    std::fs::create_dir_all(&args.out)?;
    data.write_jsonl(
        args.out.join("alerts.jsonl"),
        args.out.join("incidents.jsonl"),
        args.out.join("ground_truth.jsonl"),
    )?;
    std::fs::write(
        args.out.join("synth_config.json"),
        serde_json::to_string_pretty(&config)?,
    )?;
    println!(
        "wrote {} alerts in {} incidents to {}",
        data.alerts.len(),
        data.incident_records.len(),
        args.out.display()
    );
    Ok(())
}

fn load_stream(path: &Path) -> Result<Vec<RawAlert>> {
    let (alerts, stats) = load_alerts(path, RecordPolicy::Skip)
        .with_context(|| format!("load alerts from {}", path.display()))?;
    if stats.skipped > 0 {
        eprintln!("warning: skipped {} malformed records", stats.skipped);
    }
    Ok(alerts)
}

fn labeled_incidents(alerts: &[RawAlert], incidents_path: &Path) -> Result<Vec<Incident>> {
    let records = load_incident_records(incidents_path)
        .with_context(|| format!("load incidents from {}", incidents_path.display()))?;
    let mut incidents = group_incidents(alerts);
    attach_labels(&mut incidents, &records).context("attach incident labels")?;
    Ok(incidents)
}

fn write_feature_file(path: &Path, rows: &[FeatureVector<Real>]) -> Result<()> {
    let mut text = String::new();
    for row in rows {
        text.push_str(&serde_json::to_string(row)?);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn load_feature_file(path: &Path) -> Result<HashMap<String, Vec<Real>>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("read features from {}", path.display()))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: FeatureVector<Real> =
            serde_json::from_str(line).with_context(|| format!("features line {}", i + 1))?;
        out.insert(row.alert_id, row.values);
    }
    Ok(out)
}

fn cmd_featurize(args: FeaturizeArgs) -> Result<()> {
    let alerts = load_stream(&args.alerts)?;
    let in_range = |a: &&RawAlert| {
        args.range
            .is_none_or(|(s, e)| a.event_time >= s && a.event_time < e)
    };
    if let Some(out) = &args.fit {
        let records = alerts
            .iter()
            .filter(in_range)
            .map(|a| flatten_document(&a.body))
            .collect::<Result<Vec<_>, _>>()?;
        let spec = fit_feature_spec(&records, args.rare_threshold)?;
        spec.save(out)?;
        println!(
            "fitted spec: {} numeric, {} categorical, {} dropped, width {}",
            spec.numeric.len(),
            spec.categorical.len(),
            spec.dropped.len(),
            spec.width()
        );
        return Ok(());
    }
    let Some(out) = &args.transform else {
        bail!("pass --fit OUT or --transform OUT");
    };
    let spec = FeatureSpec::load(args.spec.as_ref().expect("clap enforces --spec"))?;
    let rows: Vec<FeatureVector<Real>> = alerts
        .iter()
        .map(|a| {
            let record = flatten_document(&a.body)?;
            Ok(FeatureVector {
                alert_id: a.alert_id.clone(),
                values: transform_record(&record, &spec),
            })
        })
        .collect::<Result<_>>()?;
    write_feature_file(out, &rows)?;
    println!(
        "transformed {} alerts at width {}",
        rows.len(),
        spec.width()
    );
    Ok(())
}

fn cmd_context(args: ContextArgs) -> Result<()> {
    let alerts = load_stream(&args.alerts)?;
    let config = match args.windows {
        Some(windows) => ContextConfig::with_windows(windows),
        None => ContextConfig::default(),
    };
    let vectors = compute_context_stream::<Real>(&alerts, &config)?;
    let rows: Vec<FeatureVector<Real>> = vectors
        .into_iter()
        .map(|v| FeatureVector {
            alert_id: v.alert_id,
            values: v.values,
        })
        .collect();
    write_feature_file(&args.out, &rows)?;
    println!(
        "computed {} context vectors of width {}",
        rows.len(),
        config.width()
    );
    Ok(())
}

/// Feature matrix, per-incident member rows, incident labels, and per-alert
/// labels for incidents anchored in a range.
type AssembledRange = (DenseMatrix<Real>, Vec<Vec<usize>>, Vec<bool>, Vec<bool>);

/// Alerts of incidents anchored in `range`, with propagated labels, as a
/// feature matrix over the given per-alert vectors.
fn assemble_range(
    incidents: &[Incident],
    features: &HashMap<String, Vec<Real>>,
    range: (i64, i64),
) -> Result<AssembledRange> {
    let width = features.values().next().map_or(0, Vec::len);
    let mut matrix = DenseMatrix::with_width(width);
    let mut members = Vec::new();
    let mut incident_labels = Vec::new();
    let mut alert_labels = Vec::new();
    for inc in incidents {
        if inc.anchor_time < range.0 || inc.anchor_time >= range.1 {
            continue;
        }
        let label = inc.label.context("incident missing label")?;
        let mut rows = Vec::with_capacity(inc.alert_ids.len());
        for id in &inc.alert_ids {
            let values = features
                .get(id)
                .with_context(|| format!("no feature vector for alert {id}"))?;
            rows.push(matrix.rows());
            matrix.push_row(values);
            alert_labels.push(label);
        }
        members.push(rows);
        incident_labels.push(label);
    }
    Ok((matrix, members, incident_labels, alert_labels))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let alerts = load_stream(&args.alerts)?;
    let incidents = labeled_incidents(&alerts, &args.incidents)?;
    let features = load_feature_file(&args.features)?;
    let (matrix, _, _, labels) = assemble_range(&incidents, &features, args.train_range)?;
    let matrix = if args.standardize || matches!(args.task, TaskKind::Context) {
        Standardizer::fit(&matrix).apply(&matrix)
    } else {
        matrix
    };
    let model = train(&matrix, &labels, &TrainConfig::new(args.algo, args.seed))?;
    save_model(&model, &args.out)?;
    println!(
        "trained {} on {} alerts (width {}), saved to {}",
        args.algo,
        matrix.rows(),
        matrix.cols(),
        args.out.display()
    );
    Ok(())
}

fn cmd_zoo(args: ZooArgs) -> Result<()> {
    let alerts = load_stream(&args.alerts)?;
    let incidents = labeled_incidents(&alerts, &args.incidents)?;
    let content = load_feature_file(&args.content_features)?;
    let context = load_feature_file(&args.context_features)?;

    let (content_train, _, _, train_labels) =
        assemble_range(&incidents, &content, args.train_range)?;
    let (context_train_raw, _, _, _) = assemble_range(&incidents, &context, args.train_range)?;
    let standardizer = Standardizer::fit(&context_train_raw);
    let context_train = standardizer.apply(&context_train_raw);

    let (content_test, members, incident_labels, _) =
        assemble_range(&incidents, &content, args.test_range)?;
    let (context_test_raw, _, _, _) = assemble_range(&incidents, &context, args.test_range)?;
    let test = ZooTestSet {
        content: content_test,
        context: standardizer.apply(&context_test_raw),
        incident_members: members,
        incident_labels,
    };
    let zoo = build_zoo(
        (&content_train, &train_labels),
        (&context_train, &train_labels),
        &test,
        args.seed,
    )?;
    let report = select_best(&zoo)?;

    std::fs::create_dir_all(&args.out_dir)?;
    std::fs::write(
        args.out_dir.join("selection_report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    std::fs::write(
        args.out_dir.join("zoo_metrics.csv"),
        zoo_metrics_csv(&report),
    )?;
    println!(
        "selected {} with incident ROC AUC {:.4} (baseline precision {:.4})",
        report.winner, report.metrics.roc_auc, report.baseline_precision
    );
    Ok(())
}

fn cmd_triage(args: TriageArgs) -> Result<()> {
    let alerts = load_stream(&args.alerts)?;
    let incidents = labeled_incidents(&alerts, &args.incidents)?;
    let ground_truth = match &args.ground_truth {
        Some(path) => Some(load_ground_truth(path)?),
        None => None,
    };
    let model = DeployableModel::load(&args.winner)?;
    let alert_scores = model.score_stream(&alerts)?;
    let score_of: HashMap<&str, f64> = alerts
        .iter()
        .zip(&alert_scores)
        .map(|(a, &s)| (a.alert_id.as_str(), s))
        .collect();
    let severity_of: HashMap<&str, f64> = alerts
        .iter()
        .map(|a| (a.alert_id.as_str(), a.severity))
        .collect();

    let triage_incident = |inc: &Incident| -> TriageIncident {
        let score = inc
            .alert_ids
            .iter()
            .map(|id| score_of[id.as_str()])
            .fold(0.0f64, f64::max);
        let severity = inc
            .alert_ids
            .iter()
            .map(|id| severity_of[id.as_str()])
            .fold(0.0f64, f64::max);
        TriageIncident {
            incident_id: inc.incident_id.clone(),
            created_time: inc.created_time,
            queue_time: inc.queue_time.unwrap_or(0.0),
            actionable: inc.label.unwrap_or(false),
            severity,
            score,
        }
    };
    let in_range = |inc: &&Incident, range: (i64, i64)| {
        inc.anchor_time >= range.0 && inc.anchor_time < range.1
    };

    let validation: Vec<TriageIncident> = incidents
        .iter()
        .filter(|i| in_range(i, args.validation_range))
        .map(triage_incident)
        .collect();
    let fit = select_threshold_at_recall(
        &validation.iter().map(|i| i.score).collect::<Vec<_>>(),
        &validation.iter().map(|i| i.actionable).collect::<Vec<_>>(),
        args.target_recall,
    )?;

    let sim: Vec<TriageIncident> = incidents
        .iter()
        .filter(|i| in_range(i, args.triage_range))
        .map(triage_incident)
        .collect();

    let mut queue_times = Vec::new();
    for &hours in &args.slices {
        let slice_secs = hours * 3_600;
        let slices = slice_incidents(&sim, args.triage_range, slice_secs);
        let mut means = Vec::new();
        let mut by_policy = HashMap::new();
        for policy in ALL_POLICIES {
            let mean = mean_actionable_queue_time(&slices, policy)?.unwrap_or(f64::NAN);
            by_policy.insert(policy.name(), mean);
            means.push((policy.name().to_string(), mean));
        }
        let baseline = by_policy[OrderingPolicy::Baseline.name()];
        let teq_mean = by_policy[OrderingPolicy::Teq.name()];
        queue_times.push(SliceQueueTimes {
            slice_secs,
            slices: slices.len(),
            means,
            teq_saving_vs_baseline: if baseline > 0.0 {
                (baseline - teq_mean) / baseline
            } else {
                0.0
            },
        });
    }

    let suppression_run = suppress_incidents(&sim, fit.threshold)?;
    let suppression = SuppressionReport {
        target_recall: args.target_recall,
        threshold: fit.threshold,
        fit_recall: fit.achieved_recall,
        leakage_flag: ranges_overlap(args.validation_range, args.triage_range),
        holdout: suppression_run.counts,
        daily: daily_suppression(&sim, fit.threshold, args.triage_range.0)?,
    };

    let ordering = match &ground_truth {
        None => None,
        Some(gt) => {
            let mut rank_sum_teq = 0u64;
            let mut rank_sum_chrono = 0u64;
            let mut counted = 0usize;
            for inc in incidents.iter().filter(|i| in_range(i, args.triage_range)) {
                let Some(record) = gt.get(&inc.incident_id) else {
                    continue;
                };
                let Some(evidence) = record.evidence_alert_id.as_deref() else {
                    continue;
                };
                let scores: HashMap<String, f64> = inc
                    .alert_ids
                    .iter()
                    .map(|id| (id.clone(), score_of[id.as_str()]))
                    .collect();
                let ranking = rank_alerts_within_incident(inc, &scores, Some(evidence))?;
                let (Some(rank), Some(chrono)) = (
                    ranking.evidence_rank,
                    inc.alert_ids
                        .iter()
                        .position(|id| id == evidence)
                        .map(|p| p + 1),
                ) else {
                    continue;
                };
                rank_sum_teq += rank as u64;
                rank_sum_chrono += chrono as u64;
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

    let report = TriageReport {
        queue_times,
        suppression,
        ordering,
    };
    std::fs::create_dir_all(&args.out_dir)?;
    std::fs::write(
        args.out_dir.join("triage_report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    std::fs::write(
        args.out_dir.join("queue_times.csv"),
        queue_times_csv(&report),
    )?;
    std::fs::write(
        args.out_dir.join("suppression_daily.csv"),
        suppression_csv(&report),
    )?;
    println!(
        "threshold {:.4} (fit recall {:.3}); suppressed {} of {} incidents",
        report.suppression.threshold,
        report.suppression.fit_recall,
        report.suppression.holdout.suppressed(),
        sim.len()
    );
    Ok(())
}

fn ranges_overlap(a: (i64, i64), b: (i64, i64)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

fn cmd_decay(args: DecayArgs) -> Result<()> {
    let alerts = load_stream(&args.alerts)?;
    let incidents = labeled_incidents(&alerts, &args.incidents)?;
    let origin = args
        .origin
        .or_else(|| incidents.iter().map(|i| i.anchor_time).min())
        .context("dataset has no incidents")?;
    let mut config = DecayConfig::new(origin, args.seed);
    config.month_secs = args.month_secs;
    config.train_months = args.train_months;
    config.rare_threshold = args.rare_threshold;
    if let Some(windows) = args.windows {
        config.context = ContextConfig::with_windows(windows);
    }
    let mut experiment = DecayExperiment::<Real>::new(&alerts, &incidents, config)?;
    let mut reports: Vec<DecayReport> = Vec::new();
    if matches!(args.mode, DecayMode::Fixed | DecayMode::Both) {
        reports.push(experiment.fixed_report()?);
    }
    if matches!(args.mode, DecayMode::Retrain | DecayMode::Both) {
        reports.push(experiment.retraining_report()?);
    }
    std::fs::create_dir_all(&args.out_dir)?;
    let refs: Vec<&DecayReport> = reports.iter().collect();
    std::fs::write(
        args.out_dir.join("decay_report.json"),
        serde_json::to_string_pretty(&reports)?,
    )?;
    std::fs::write(
        args.out_dir.join("decay_metrics.csv"),
        decay_metrics_csv(&refs),
    )?;
    std::fs::write(
        args.out_dir.join("decay_curves.csv"),
        decay_curves_csv(&refs),
    )?;
    for report in &reports {
        for row in &report.rows {
            println!(
                "{} month {}: {} roc_auc {:.4}",
                report.scenario.name(),
                row.test_month,
                row.winner,
                row.metrics.roc_auc
            );
        }
    }
    Ok(())
}

fn cmd_explain(args: ExplainArgs) -> Result<()> {
    let alerts = load_stream(&args.alerts)?;
    let incidents = labeled_incidents(&alerts, &args.incidents)?;
    let features = load_feature_file(&args.features)?;
    let (matrix, _, _, labels) = assemble_range(&incidents, &features, args.range)?;
    let model: TrainedModel<Real> = load_model(&args.model)?;
    let names: Vec<String> = match &args.spec {
        Some(path) => FeatureSpec::load(path)?.feature_names(),
        None => (0..matrix.cols()).map(|i| format!("feature_{i}")).collect(),
    };
    let report = match args.method {
        ExplainMethod::Perm => {
            let predict = |m: &DenseMatrix<Real>| model.predict_proba(m).expect("width matches");
            let importances = permutation_importance(
                predict,
                &matrix,
                &labels,
                ImportanceMetric::RocAuc,
                args.repeats,
                args.seed,
            )?;
            let baseline = teq::metrics::roc_auc(&predict(&matrix), &labels)?;
            permutation_report(&names, &importances, baseline, args.repeats)
        }
        ExplainMethod::Shapley => {
            let take = matrix.rows().min(args.points);
            let points = matrix.select_rows(&(0..take).collect::<Vec<_>>());
            let predict = |row: &[Real]| model.predict_one(row).expect("width matches");
            shapley_report(predict, &points, &matrix, &names, args.samples, args.seed)?
        }
    };
    std::fs::write(&args.out, serde_json::to_string_pretty(&report)?)?;
    for feature in report.ranked().into_iter().take(10) {
        println!("{:>12.6}  {}", feature.importance, feature.name);
    }
    Ok(())
}

fn cmd_pipeline(args: PipelineArgs) -> Result<()> {
    if args.emit_default_config {
        let template = PipelineConfig::new("alerts.jsonl", "incidents.jsonl", "run");
        println!("{}", serde_json::to_string_pretty(&template)?);
        return Ok(());
    }
    let config = PipelineConfig::load(args.config.as_ref().expect("clap enforces --config"))?;
    let outcome = run_pipeline(&config)?;
    println!(
        "winner {} (incident ROC AUC {:.4}); reports under {}",
        outcome.selection.winner,
        outcome.selection.metrics.roc_auc,
        outcome.out_dir.display()
    );
    Ok(())
}
