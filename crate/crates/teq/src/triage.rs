//! Triage strategies evaluated by simulation: incident queue prioritization,
//! recall-targeted suppression, and within-incident alert ordering.
//!
//! Queue simulation replays observed queue times: within a slice, the sorted
//! ascending times are reassigned to incidents in policy order, so a policy
//! that ranks actionable incidents higher hands them the shorter waits. The
//! assigned multiset always equals the observed multiset; only the pairing
//! changes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alert::Incident;

#[derive(Debug, Error)]
pub enum TriageError {
    #[error("queue slice needs at least one incident")]
    EmptySlice,
    #[error("incident {0} has no queue time")]
    MissingQueueTime(String),
    #[error("no positive incidents to fit a threshold on")]
    NoPositives,
    #[error("recall target {0} outside (0, 1]")]
    InvalidRecallTarget(f64),
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("scores and labels length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no score for alert {0}")]
    MissingAlertScore(String),
}

/// One incident as the queue simulation sees it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriageIncident {
    pub incident_id: String,
    pub created_time: i64,
    /// Observed seconds in queue before investigation.
    pub queue_time: f64,
    pub actionable: bool,
    /// Rule-based severity (max over member alerts).
    pub severity: f64,
    /// Incident score from the selected model.
    pub score: f64,
}

/// Incidents created within one slice interval.
#[derive(Debug, Clone)]
pub struct QueueSlice {
    pub duration_secs: u64,
    pub incidents: Vec<TriageIncident>,
}

/// Queue orderings under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingPolicy {
    /// Arrival order (the stand-in for the analyst baseline on synthetic
    /// data, which has no human picks to replay).
    Baseline,
    /// Descending rule-based severity.
    Severity,
    /// Descending incident score.
    Teq,
}

pub const ALL_POLICIES: [OrderingPolicy; 3] = [
    OrderingPolicy::Baseline,
    OrderingPolicy::Severity,
    OrderingPolicy::Teq,
];

impl OrderingPolicy {
    pub fn name(self) -> &'static str {
        match self {
            OrderingPolicy::Baseline => "baseline",
            OrderingPolicy::Severity => "severity",
            OrderingPolicy::Teq => "teq",
        }
    }
}

/// Rank slice incidents under a policy. Ties (and the baseline itself) order
/// chronologically, oldest first, then by id for full determinism.
fn policy_order(incidents: &[TriageIncident], policy: OrderingPolicy) -> Vec<usize> {
    let mut order: Vec<usize> = (0..incidents.len()).collect();
    let chrono = |i: usize| (incidents[i].created_time, &incidents[i].incident_id);
    match policy {
        OrderingPolicy::Baseline => order.sort_by(|&a, &b| chrono(a).cmp(&chrono(b))),
        OrderingPolicy::Severity => order.sort_by(|&a, &b| {
            incidents[b]
                .severity
                .partial_cmp(&incidents[a].severity)
                .expect("finite severity")
                .then_with(|| chrono(a).cmp(&chrono(b)))
        }),
        OrderingPolicy::Teq => order.sort_by(|&a, &b| {
            incidents[b]
                .score
                .partial_cmp(&incidents[a].score)
                .expect("finite score")
                .then_with(|| chrono(a).cmp(&chrono(b)))
        }),
    }
    order
}

/// Reassign the slice's observed queue times to its incidents in policy
/// order: the k-th ranked incident receives the k-th smallest observed time.
/// Returns `(incident index, assigned time)` in rank order; the assigned
/// multiset always equals the observed multiset.
pub fn assign_queue_times(
    slice: &QueueSlice,
    policy: OrderingPolicy,
) -> Result<Vec<(usize, f64)>, TriageError> {
    if slice.incidents.is_empty() {
        return Err(TriageError::EmptySlice);
    }
    let mut times: Vec<f64> = slice.incidents.iter().map(|i| i.queue_time).collect();
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite queue times"));
    let order = policy_order(&slice.incidents, policy);
    Ok(order.into_iter().zip(times).collect())
}

/// Mean queue time of actionable incidents after reassigning the sorted
/// observed times to the policy's ranking. `None` when the slice has no
/// actionable incident (such slices are excluded from aggregation).
pub fn simulate_queue_times(
    slice: &QueueSlice,
    policy: OrderingPolicy,
) -> Result<Option<f64>, TriageError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (idx, time) in assign_queue_times(slice, policy)? {
        if slice.incidents[idx].actionable {
            sum += time;
            count += 1;
        }
    }
    Ok((count > 0).then(|| sum / count as f64))
}

/// Split incidents into disjoint consecutive slices of `slice_secs` covering
/// `[range.0, range.1)` by creation time. Empty intervals produce no slice.
pub fn slice_incidents(
    incidents: &[TriageIncident],
    range: (i64, i64),
    slice_secs: u64,
) -> Vec<QueueSlice> {
    let mut buckets: HashMap<i64, Vec<TriageIncident>> = HashMap::new();
    for inc in incidents {
        if inc.created_time < range.0 || inc.created_time >= range.1 {
            continue;
        }
        let k = (inc.created_time - range.0) / slice_secs as i64;
        buckets.entry(k).or_default().push(inc.clone());
    }
    let mut keys: Vec<i64> = buckets.keys().copied().collect();
    keys.sort_unstable();
    keys.into_iter()
        .map(|k| QueueSlice {
            duration_secs: slice_secs,
            incidents: buckets.remove(&k).unwrap(),
        })
        .collect()
}

/// Mean of per-slice means over slices that have actionable incidents.
pub fn mean_actionable_queue_time(
    slices: &[QueueSlice],
    policy: OrderingPolicy,
) -> Result<Option<f64>, TriageError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for slice in slices {
        if let Some(mean) = simulate_queue_times(slice, policy)? {
            sum += mean;
            count += 1;
        }
    }
    Ok((count > 0).then(|| sum / count as f64))
}

/// A fitted suppression threshold and the recall it achieves on the fit set.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub threshold: f64,
    pub achieved_recall: f64,
}

/// Largest threshold whose recall (`score >= t`) meets the target: the
/// k-th highest positive score for `k = ceil(target * positives)`.
pub fn select_threshold_at_recall(
    scores: &[f64],
    labels: &[bool],
    target_recall: f64,
) -> Result<ThresholdFit, TriageError> {
    if scores.len() != labels.len() {
        return Err(TriageError::LengthMismatch(scores.len(), labels.len()));
    }
    if !(target_recall > 0.0 && target_recall <= 1.0) {
        return Err(TriageError::InvalidRecallTarget(target_recall));
    }
    let mut positive_scores: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(&s, _)| s)
        .collect();
    if positive_scores.is_empty() {
        return Err(TriageError::NoPositives);
    }
    positive_scores.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
    let p = positive_scores.len();
    let k = ((target_recall * p as f64).ceil() as usize).clamp(1, p);
    let threshold = positive_scores[k - 1];
    let captured = positive_scores.iter().filter(|&&s| s >= threshold).count();
    Ok(ThresholdFit {
        threshold,
        achieved_recall: captured as f64 / p as f64,
    })
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct SuppressionCounts {
    pub retained_pos: usize,
    pub retained_neg: usize,
    pub suppressed_pos: usize,
    pub suppressed_neg: usize,
}

impl SuppressionCounts {
    pub fn retained(&self) -> usize {
        self.retained_pos + self.retained_neg
    }

    pub fn suppressed(&self) -> usize {
        self.suppressed_pos + self.suppressed_neg
    }

    /// Recall preserved by suppression.
    pub fn recall(&self) -> f64 {
        let pos = self.retained_pos + self.suppressed_pos;
        if pos == 0 {
            0.0
        } else {
            self.retained_pos as f64 / pos as f64
        }
    }

    /// Fraction of negatives suppressed.
    pub fn suppression_rate(&self) -> f64 {
        let neg = self.retained_neg + self.suppressed_neg;
        if neg == 0 {
            0.0
        } else {
            self.suppressed_neg as f64 / neg as f64
        }
    }
}

/// Outcome of thresholding a batch of scored incidents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Suppression {
    pub threshold: f64,
    /// Indices into the input slice.
    pub retained: Vec<usize>,
    pub suppressed: Vec<usize>,
    pub counts: SuppressionCounts,
}

/// Keep incidents scoring at or above the threshold, drop the rest.
pub fn suppress_incidents(
    incidents: &[TriageIncident],
    threshold: f64,
) -> Result<Suppression, TriageError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(TriageError::InvalidThreshold(threshold));
    }
    let mut out = Suppression {
        threshold,
        retained: Vec::new(),
        suppressed: Vec::new(),
        counts: SuppressionCounts::default(),
    };
    for (i, inc) in incidents.iter().enumerate() {
        if inc.score >= threshold {
            out.retained.push(i);
            if inc.actionable {
                out.counts.retained_pos += 1;
            } else {
                out.counts.retained_neg += 1;
            }
        } else {
            out.suppressed.push(i);
            if inc.actionable {
                out.counts.suppressed_pos += 1;
            } else {
                out.counts.suppressed_neg += 1;
            }
        }
    }
    Ok(out)
}

/// Per-day suppression counts for volume reporting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DailySuppression {
    pub day: usize,
    pub counts: SuppressionCounts,
}

pub fn daily_suppression(
    incidents: &[TriageIncident],
    threshold: f64,
    origin: i64,
) -> Result<Vec<DailySuppression>, TriageError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(TriageError::InvalidThreshold(threshold));
    }
    let mut days: HashMap<usize, SuppressionCounts> = HashMap::new();
    for inc in incidents {
        let day = ((inc.created_time - origin).max(0) / 86_400) as usize;
        let counts = days.entry(day).or_default();
        match (inc.score >= threshold, inc.actionable) {
            (true, true) => counts.retained_pos += 1,
            (true, false) => counts.retained_neg += 1,
            (false, true) => counts.suppressed_pos += 1,
            (false, false) => counts.suppressed_neg += 1,
        }
    }
    let mut keys: Vec<usize> = days.keys().copied().collect();
    keys.sort_unstable();
    Ok(keys
        .into_iter()
        .map(|day| DailySuppression {
            day,
            counts: days[&day],
        })
        .collect())
}

/// Within-incident ordering of alerts by descending score, chronological on
/// ties.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlertRanking {
    /// Member alert ids, highest score first.
    pub ordered_alert_ids: Vec<String>,
    /// 1-based position of the ground-truth evidence alert, if known.
    pub evidence_rank: Option<usize>,
    /// 1-based chronological position of the top-scored alert.
    pub top_score_chrono_position: usize,
}

/// Order an incident's alerts by alert-level score. `scores` must cover the
/// whole membership; `evidence_alert_id` names the planted evidence alert
/// whose rank is the "alerts to inspect" metric.
pub fn rank_alerts_within_incident(
    incident: &Incident,
    scores: &HashMap<String, f64>,
    evidence_alert_id: Option<&str>,
) -> Result<AlertRanking, TriageError> {
    for id in &incident.alert_ids {
        if !scores.contains_key(id) {
            return Err(TriageError::MissingAlertScore(id.clone()));
        }
    }
    // alert_ids are chronological; a stable sort on descending score keeps
    // ties in chronological order.
    let mut order: Vec<usize> = (0..incident.alert_ids.len()).collect();
    order.sort_by(|&a, &b| {
        scores[&incident.alert_ids[b]]
            .partial_cmp(&scores[&incident.alert_ids[a]])
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    let ordered_alert_ids: Vec<String> = order
        .iter()
        .map(|&i| incident.alert_ids[i].clone())
        .collect();
    let evidence_rank = evidence_alert_id
        .and_then(|ev| ordered_alert_ids.iter().position(|id| id == ev))
        .map(|p| p + 1);
    let top_score_chrono_position = order[0] + 1;
    Ok(AlertRanking {
        ordered_alert_ids,
        evidence_rank,
        top_score_chrono_position,
    })
}

/// Queue, suppression, and ordering results for one simulated deployment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriageReport {
    /// Per slice duration, per policy: mean actionable queue time (seconds).
    pub queue_times: Vec<SliceQueueTimes>,
    pub suppression: SuppressionReport,
    pub ordering: Option<OrderingReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliceQueueTimes {
    pub slice_secs: u64,
    pub slices: usize,
    /// `(policy name, mean actionable queue time)`.
    pub means: Vec<(String, f64)>,
    /// Relative saving of the model ordering vs the baseline, in [0, 1].
    pub teq_saving_vs_baseline: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuppressionReport {
    pub target_recall: f64,
    pub threshold: f64,
    /// Recall achieved on the fit (validation) set.
    pub fit_recall: f64,
    /// True when the threshold had to be fitted on the evaluation month
    /// itself rather than a preceding validation range.
    pub leakage_flag: bool,
    pub holdout: SuppressionCounts,
    pub daily: Vec<DailySuppression>,
}

/// Mean 1-based rank of the evidence alert under each ordering, over
/// positive incidents with known evidence. Sums are kept as integers so the
/// report is exactly reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderingReport {
    pub incidents: usize,
    pub rank_sum_teq: u64,
    pub rank_sum_chronological: u64,
    pub mean_rank_teq: f64,
    pub mean_rank_chronological: f64,
}

/// Queue-time section of a [`TriageReport`] as CSV.
pub fn queue_times_csv(report: &TriageReport) -> String {
    let mut out = String::from("slice_secs,policy,mean_actionable_queue_time_secs\n");
    for row in &report.queue_times {
        for (policy, mean) in &row.means {
            out.push_str(&format!("{},{},{:.6}\n", row.slice_secs, policy, mean));
        }
    }
    out
}

/// Daily suppression section of a [`TriageReport`] as CSV.
pub fn suppression_csv(report: &TriageReport) -> String {
    let mut out = String::from("day,retained_pos,retained_neg,suppressed_pos,suppressed_neg\n");
    for d in &report.suppression.daily {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            d.day,
            d.counts.retained_pos,
            d.counts.retained_neg,
            d.counts.suppressed_pos,
            d.counts.suppressed_neg
        ));
    }
    out
}
