//! Core alert data model: ingestion, incident grouping, label propagation,
//! and chronological dataset splits.
//!
//! An *alert* is one sensor firing: a normalized envelope plus an arbitrary
//! semi-structured body. An *incident* groups all alerts that happen within
//! 24 hours on the same machine, anchored at the first alert's event time.
//! Incidents carry the actionable label that analysts assign and that gets
//! propagated back to every member alert for training.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Incident grouping window: an alert joins a machine's open incident iff its
/// event time is at most this many seconds past the incident anchor.
pub const INCIDENT_WINDOW_SECS: i64 = 86_400;

#[derive(Debug, Error)]
pub enum AlertError {
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: event_time {time} precedes previous event_time {prev}")]
    TimeInversion { line: usize, time: i64, prev: i64 },
    #[error("incident {0} has no label")]
    UnlabeledIncident(String),
    #[error("unknown incident id {0} in label file")]
    UnknownIncident(String),
    #[error("invalid range: start {0} must precede end {1}")]
    InvalidRange(i64, i64),
    #[error("train range must end no later than test range starts")]
    OverlappingSplit,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One sensor firing: normalized envelope plus a schema-free body.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawAlert {
    pub alert_id: String,
    /// Seconds since the Unix epoch, UTC.
    pub event_time: i64,
    pub customer_id: String,
    pub machine_id: String,
    pub sensor_id: String,
    /// Rule-based score, dimensionless, >= 0.
    pub severity: f64,
    #[serde(default)]
    pub body: serde_json::Value,
}

impl RawAlert {
    fn validate(&self) -> Result<(), String> {
        if self.customer_id.is_empty() || self.machine_id.is_empty() || self.sensor_id.is_empty() {
            return Err("empty customer_id/machine_id/sensor_id".into());
        }
        if !self.severity.is_finite() || self.severity < 0.0 {
            return Err(format!(
                "severity {} is not a finite nonnegative number",
                self.severity
            ));
        }
        Ok(())
    }
}

/// The three labeling criteria for a resolved incident.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    /// Required manual remediation: actionable.
    ManualRemediation,
    /// Malicious activity contained by automated defenses: not actionable.
    ContainedTruePositive,
    /// No malicious activity at all: not actionable.
    FalseAlert,
}

impl LabelRule {
    pub fn actionable(self) -> bool {
        matches!(self, LabelRule::ManualRemediation)
    }
}

/// A machine-scoped 24-hour group of alerts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Incident {
    pub incident_id: String,
    pub machine_id: String,
    /// Member alert ids in chronological order.
    pub alert_ids: Vec<String>,
    /// Event time of the first member alert.
    pub anchor_time: i64,
    pub created_time: i64,
    /// Actionable label, if resolved.
    pub label: Option<bool>,
    /// Seconds the incident waited before investigation began.
    pub queue_time: Option<f64>,
}

/// Deterministic incident id derived from the grouping key. Grouping the same
/// alert stream always reproduces the same ids, so external label files can
/// join on them.
pub fn incident_id(machine_id: &str, anchor_time: i64) -> String {
    format!("{machine_id}:{anchor_time}")
}

/// Chronological train/test ranges, both half-open `[start, end)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_range: (i64, i64),
    pub test_range: (i64, i64),
}

impl DatasetSplit {
    pub fn validate(&self) -> Result<(), AlertError> {
        for (s, e) in [self.train_range, self.test_range] {
            if s >= e {
                return Err(AlertError::InvalidRange(s, e));
            }
        }
        if self.train_range.1 > self.test_range.0 {
            return Err(AlertError::OverlappingSplit);
        }
        Ok(())
    }
}

/// What to do with a malformed or out-of-order record during ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum RecordPolicy {
    /// Skip the record and count it.
    #[default]
    Skip,
    /// Abort ingestion with an error naming the offending line.
    Abort,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct IngestStats {
    pub loaded: usize,
    pub skipped: usize,
}

/// Load a line-delimited alert file. Alerts must arrive in nondecreasing
/// `event_time`; a record that goes backwards in time is treated under the
/// same policy as a malformed one.
pub fn load_alerts<P: AsRef<Path>>(
    path: P,
    policy: RecordPolicy,
) -> Result<(Vec<RawAlert>, IngestStats), AlertError> {
    let file = File::open(path.as_ref())?;
    parse_alerts(BufReader::new(file), policy)
}

/// Same as [`load_alerts`] but over any reader; used by tests and the CLI.
pub fn parse_alerts<R: BufRead>(
    reader: R,
    policy: RecordPolicy,
) -> Result<(Vec<RawAlert>, IngestStats), AlertError> {
    let mut alerts = Vec::new();
    let mut stats = IngestStats::default();
    let mut last_time: Option<i64> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Result<RawAlert, String> = serde_json::from_str::<RawAlert>(&line)
            .map_err(|e| e.to_string())
            .and_then(|a| a.validate().map(|()| a));
        let alert = match parsed {
            Ok(a) => a,
            Err(reason) => match policy {
                RecordPolicy::Skip => {
                    stats.skipped += 1;
                    continue;
                }
                RecordPolicy::Abort => {
                    return Err(AlertError::MalformedRecord {
                        line: lineno,
                        reason,
                    })
                }
            },
        };
        if let Some(prev) = last_time {
            if alert.event_time < prev {
                match policy {
                    RecordPolicy::Skip => {
                        stats.skipped += 1;
                        continue;
                    }
                    RecordPolicy::Abort => {
                        return Err(AlertError::TimeInversion {
                            line: lineno,
                            time: alert.event_time,
                            prev,
                        })
                    }
                }
            }
        }
        last_time = Some(alert.event_time);
        alerts.push(alert);
        stats.loaded += 1;
    }
    Ok((alerts, stats))
}

/// Group a chronological alert stream into machine-scoped incidents.
///
/// An alert joins its machine's open incident iff its event time is within
/// [`INCIDENT_WINDOW_SECS`] of that incident's anchor (the first alert's
/// time); otherwise it opens a new incident. The output is sorted by
/// `(anchor_time, machine_id)` so it does not depend on how the input was
/// partitioned across machines.
pub fn group_incidents(alerts: &[RawAlert]) -> Vec<Incident> {
    debug_assert!(alerts
        .windows(2)
        .all(|w| w[0].event_time <= w[1].event_time));
    struct Open {
        anchor: i64,
        alert_ids: Vec<String>,
    }
    let mut open: HashMap<&str, Open> = HashMap::new();
    let mut done: Vec<Incident> = Vec::new();
    let close = |machine: &str, o: Open| Incident {
        incident_id: incident_id(machine, o.anchor),
        machine_id: machine.to_string(),
        alert_ids: o.alert_ids,
        anchor_time: o.anchor,
        created_time: o.anchor,
        label: None,
        queue_time: None,
    };
    for alert in alerts {
        match open.get_mut(alert.machine_id.as_str()) {
            Some(o) if alert.event_time <= o.anchor + INCIDENT_WINDOW_SECS => {
                o.alert_ids.push(alert.alert_id.clone());
            }
            Some(_) => {
                let prev = open
                    .insert(
                        alert.machine_id.as_str(),
                        Open {
                            anchor: alert.event_time,
                            alert_ids: vec![alert.alert_id.clone()],
                        },
                    )
                    .expect("open incident present");
                done.push(close(&alert.machine_id, prev));
            }
            None => {
                open.insert(
                    alert.machine_id.as_str(),
                    Open {
                        anchor: alert.event_time,
                        alert_ids: vec![alert.alert_id.clone()],
                    },
                );
            }
        }
    }
    for (machine, o) in open {
        done.push(close(machine, o));
    }
    done.sort_by(|a, b| (a.anchor_time, &a.machine_id).cmp(&(b.anchor_time, &b.machine_id)));
    done
}

/// Per-incident annotation from a label file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IncidentRecord {
    pub incident_id: String,
    pub label: bool,
    pub queue_time: f64,
}

/// Load a line-delimited incident label file into a map keyed by incident id.
pub fn load_incident_records<P: AsRef<Path>>(
    path: P,
) -> Result<HashMap<String, IncidentRecord>, AlertError> {
    let file = File::open(path.as_ref())?;
    let mut out = HashMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: IncidentRecord =
            serde_json::from_str(&line).map_err(|e| AlertError::MalformedRecord {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        out.insert(rec.incident_id.clone(), rec);
    }
    Ok(out)
}

/// Attach labels and queue times to grouped incidents. Every incident must be
/// covered by the record map.
pub fn attach_labels(
    incidents: &mut [Incident],
    records: &HashMap<String, IncidentRecord>,
) -> Result<(), AlertError> {
    for inc in incidents.iter_mut() {
        let rec = records
            .get(&inc.incident_id)
            .ok_or_else(|| AlertError::UnlabeledIncident(inc.incident_id.clone()))?;
        inc.label = Some(rec.label);
        inc.queue_time = Some(rec.queue_time);
    }
    Ok(())
}

/// Propagate incident labels down to member alerts. Returns `(alert_id,
/// label)` pairs in incident order; label counts are conserved by
/// construction.
pub fn propagate_labels(incidents: &[Incident]) -> Result<Vec<(String, bool)>, AlertError> {
    let mut out = Vec::new();
    for inc in incidents {
        let label = inc
            .label
            .ok_or_else(|| AlertError::UnlabeledIncident(inc.incident_id.clone()))?;
        for id in &inc.alert_ids {
            out.push((id.clone(), label));
        }
    }
    Ok(out)
}

/// Indices of alerts falling in the train/test ranges by their own
/// `event_time`. Alerts outside both ranges are excluded.
pub fn split_alert_indices(
    alerts: &[RawAlert],
    split: &DatasetSplit,
) -> Result<(Vec<usize>, Vec<usize>), AlertError> {
    split.validate()?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, a) in alerts.iter().enumerate() {
        let t = a.event_time;
        if t >= split.train_range.0 && t < split.train_range.1 {
            train.push(i);
        } else if t >= split.test_range.0 && t < split.test_range.1 {
            test.push(i);
        }
    }
    Ok((train, test))
}

/// An incident-coherent chronological split: incidents are assigned by their
/// anchor time and every member alert travels with its incident, so an
/// incident anchored in the train range keeps alerts that spill past the
/// range boundary.
#[derive(Debug, Clone, Default)]
pub struct TimeSplit {
    pub train_incidents: Vec<usize>,
    pub test_incidents: Vec<usize>,
    /// Indices into the alert slice, one list per side, incident order.
    pub train_alerts: Vec<usize>,
    pub test_alerts: Vec<usize>,
}

pub fn time_split(
    alerts: &[RawAlert],
    incidents: &[Incident],
    split: &DatasetSplit,
) -> Result<TimeSplit, AlertError> {
    split.validate()?;
    let index: HashMap<&str, usize> = alerts
        .iter()
        .enumerate()
        .map(|(i, a)| (a.alert_id.as_str(), i))
        .collect();
    let mut out = TimeSplit::default();
    for (k, inc) in incidents.iter().enumerate() {
        let t = inc.anchor_time;
        let side = if t >= split.train_range.0 && t < split.train_range.1 {
            Some((&mut out.train_incidents, &mut out.train_alerts))
        } else if t >= split.test_range.0 && t < split.test_range.1 {
            Some((&mut out.test_incidents, &mut out.test_alerts))
        } else {
            None
        };
        if let Some((incs, als)) = side {
            incs.push(k);
            for id in &inc.alert_ids {
                als.push(index[id.as_str()]);
            }
        }
    }
    Ok(out)
}
