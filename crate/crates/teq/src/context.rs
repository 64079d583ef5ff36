//! Streaming look-back context features.
//!
//! For every alert, ten predicates are evaluated over a ladder of nested time
//! windows ending at the alert's own event time (the alert itself included),
//! capturing estate size, endpoint and sensor activity, and severity trends.
//! The streaming computation is a single pass with per-entity time-indexed
//! deques, amortized `O(alerts x windows)` plus logarithmic factors;
//! [`brute_force_context`] is the definitionally-correct rescan used as its
//! oracle.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alert::RawAlert;
use crate::num::Scalar;

/// Default window ladder in seconds: one minute up to one week.
pub const DEFAULT_WINDOWS: [u64; 9] = [60, 120, 300, 600, 3_600, 7_200, 43_200, 86_400, 604_800];

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("alert {index} goes backwards in time ({time} after {prev})")]
    TimeRegression { index: usize, time: i64, prev: i64 },
    #[error("alert index {index} out of range for stream of {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid context config: {0}")]
    InvalidConfig(String),
}

/// The ten context predicates, in a fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    /// Count of alerts on the alert's customer estate.
    CustomerAlerts,
    /// Count of alerts on the alert's machine.
    MachineAlerts,
    /// Count of alerts fired by the alert's sensor.
    SensorAlerts,
    /// Mean severity of alerts on the alert's machine.
    MachineMeanSeverity,
    /// Mean severity of alerts fired by the alert's sensor.
    SensorMeanSeverity,
    /// Count of distinct sensors that fired on the customer estate.
    CustomerDistinctSensors,
    /// Count of distinct machines on the estate that triggered alerts.
    CustomerDistinctMachines,
    /// Count of distinct machines the sensor fired on.
    SensorDistinctMachines,
    /// Count of distinct customers the sensor fired for.
    SensorDistinctCustomers,
    /// Count of alerts by the alert's sensor on the alert's customer estate.
    CustomerSensorAlerts,
}

pub const ALL_PREDICATES: [Predicate; 10] = [
    Predicate::CustomerAlerts,
    Predicate::MachineAlerts,
    Predicate::SensorAlerts,
    Predicate::MachineMeanSeverity,
    Predicate::SensorMeanSeverity,
    Predicate::CustomerDistinctSensors,
    Predicate::CustomerDistinctMachines,
    Predicate::SensorDistinctMachines,
    Predicate::SensorDistinctCustomers,
    Predicate::CustomerSensorAlerts,
];

impl Predicate {
    pub fn name(self) -> &'static str {
        match self {
            Predicate::CustomerAlerts => "customer_alerts",
            Predicate::MachineAlerts => "machine_alerts",
            Predicate::SensorAlerts => "sensor_alerts",
            Predicate::MachineMeanSeverity => "machine_mean_severity",
            Predicate::SensorMeanSeverity => "sensor_mean_severity",
            Predicate::CustomerDistinctSensors => "customer_distinct_sensors",
            Predicate::CustomerDistinctMachines => "customer_distinct_machines",
            Predicate::SensorDistinctMachines => "sensor_distinct_machines",
            Predicate::SensorDistinctCustomers => "sensor_distinct_customers",
            Predicate::CustomerSensorAlerts => "customer_sensor_alerts",
        }
    }
}

/// Window ladder and predicate set for context computation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextConfig {
    /// Look-back windows in seconds, strictly increasing.
    pub windows: Vec<u64>,
    pub predicates: Vec<Predicate>,
}

impl Default for ContextConfig {
    fn default() -> Self {
        Self {
            windows: DEFAULT_WINDOWS.to_vec(),
            predicates: ALL_PREDICATES.to_vec(),
        }
    }
}

impl ContextConfig {
    pub fn with_windows(windows: Vec<u64>) -> Self {
        Self {
            windows,
            predicates: ALL_PREDICATES.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<(), ContextError> {
        if self.windows.is_empty() || self.predicates.is_empty() {
            return Err(ContextError::InvalidConfig(
                "windows and predicates must be nonempty".into(),
            ));
        }
        if !self.windows.windows(2).all(|w| w[0] < w[1]) {
            return Err(ContextError::InvalidConfig(
                "windows must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// Output width: `windows x predicates` (90 with the defaults).
    pub fn width(&self) -> usize {
        self.windows.len() * self.predicates.len()
    }

    /// Feature names in vector order: predicate-major, window-ascending.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.width());
        for p in &self.predicates {
            for w in &self.windows {
                names.push(format!("{}_w{}", p.name(), w));
            }
        }
        names
    }
}

/// Dense context feature vector for one alert.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct ContextVector<S> {
    pub alert_id: String,
    /// Predicate-major, window-ascending.
    pub values: Vec<S>,
}

#[derive(Default)]
struct EntityIndex {
    map: HashMap<String, u32>,
}

impl EntityIndex {
    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&i) = self.map.get(name) {
            return i;
        }
        let i = self.map.len() as u32;
        self.map.insert(name.to_string(), i);
        i
    }
}

/// Event times of one entity, pruned to the largest window.
#[derive(Default)]
struct CountState {
    times: VecDeque<i64>,
}

impl CountState {
    fn push(&mut self, t: i64) {
        self.times.push_back(t);
    }

    fn prune(&mut self, cutoff: i64) {
        while self.times.front().is_some_and(|&f| f <= cutoff) {
            self.times.pop_front();
        }
    }

    /// Alerts with time in `(t - w, t]`.
    fn count_since(&self, cutoff: i64) -> usize {
        let idx = self.times.partition_point(|&x| x <= cutoff);
        self.times.len() - idx
    }
}

/// Event times plus a running severity total, for windowed means. Cumulative
/// sums are absolute so pruning the front never touches live entries.
#[derive(Default)]
struct SumState {
    entries: VecDeque<(i64, f64)>,
    pruned_cum: f64,
}

impl SumState {
    fn push(&mut self, t: i64, value: f64) {
        let cum = self.entries.back().map_or(self.pruned_cum, |&(_, c)| c) + value;
        self.entries.push_back((t, cum));
    }

    fn prune(&mut self, cutoff: i64) {
        while let Some(&(t, cum)) = self.entries.front() {
            if t <= cutoff {
                self.pruned_cum = cum;
                self.entries.pop_front();
            } else {
                break;
            }
        }
    }

    /// `(sum, count)` over `(t - w, t]`.
    fn sum_since(&self, cutoff: i64) -> (f64, usize) {
        let idx = self.entries.partition_point(|&(x, _)| x <= cutoff);
        let count = self.entries.len() - idx;
        if count == 0 {
            return (0.0, 0);
        }
        let last = self.entries.back().expect("nonempty").1;
        let before = if idx == 0 {
            self.pruned_cum
        } else {
            self.entries[idx - 1].1
        };
        (last - before, count)
    }
}

/// Most-recent firing time per related entity, with a multiset of those times
/// for windowed distinct counts: an entity is inside window `w` iff its last
/// firing is newer than `t - w`.
#[derive(Default)]
struct LastSeenState {
    last: HashMap<u32, i64>,
    by_time: BTreeMap<i64, u32>,
}

impl LastSeenState {
    fn fire(&mut self, entity: u32, t: i64) {
        if let Some(old) = self.last.insert(entity, t) {
            if old == t {
                return; // same entity twice at one timestamp
            }
            // The old slot may already have been pruned.
            if let Some(c) = self.by_time.get_mut(&old) {
                if *c == 1 {
                    self.by_time.remove(&old);
                } else {
                    *c -= 1;
                }
            }
        }
        *self.by_time.entry(t).or_insert(0) += 1;
    }

    fn prune(&mut self, cutoff: i64) {
        while let Some((&t, _)) = self.by_time.first_key_value() {
            if t <= cutoff {
                self.by_time.pop_first();
            } else {
                break;
            }
        }
    }

    /// Ascending `(last_time, entities)` pairs with suffix counts, shared by
    /// all windows of one evaluation.
    fn snapshot(&self) -> (Vec<i64>, Vec<usize>) {
        let times: Vec<i64> = self.by_time.keys().copied().collect();
        let mut suffix = vec![0usize; times.len() + 1];
        for (i, (_, &c)) in self.by_time.iter().enumerate().rev() {
            suffix[i] = suffix[i + 1] + c as usize;
        }
        (times, suffix)
    }
}

/// Incremental single-pass context computation over a chronological stream.
pub struct ContextStream {
    config: ContextConfig,
    max_window: i64,
    prev_time: Option<i64>,
    index: usize,
    customers: EntityIndex,
    machines: EntityIndex,
    sensors: EntityIndex,
    customer_counts: Vec<CountState>,
    machine_counts: Vec<CountState>,
    sensor_counts: Vec<CountState>,
    pair_counts: HashMap<(u32, u32), CountState>,
    machine_severity: Vec<SumState>,
    sensor_severity: Vec<SumState>,
    customer_sensors: Vec<LastSeenState>,
    customer_machines: Vec<LastSeenState>,
    sensor_machines: Vec<LastSeenState>,
    sensor_customers: Vec<LastSeenState>,
}

fn grow<T: Default>(v: &mut Vec<T>, idx: u32) -> &mut T {
    let idx = idx as usize;
    if v.len() <= idx {
        v.resize_with(idx + 1, T::default);
    }
    &mut v[idx]
}

impl ContextStream {
    pub fn new(config: ContextConfig) -> Result<Self, ContextError> {
        config.validate()?;
        let max_window = *config.windows.last().expect("nonempty") as i64;
        Ok(Self {
            config,
            max_window,
            prev_time: None,
            index: 0,
            customers: EntityIndex::default(),
            machines: EntityIndex::default(),
            sensors: EntityIndex::default(),
            customer_counts: Vec::new(),
            machine_counts: Vec::new(),
            sensor_counts: Vec::new(),
            pair_counts: HashMap::new(),
            machine_severity: Vec::new(),
            sensor_severity: Vec::new(),
            customer_sensors: Vec::new(),
            customer_machines: Vec::new(),
            sensor_machines: Vec::new(),
            sensor_customers: Vec::new(),
        })
    }

    /// Ingest the next alert and return its context vector. The alert itself
    /// is inside each of its own windows, so counts are at least one and
    /// severity means are never over an empty window.
    pub fn push<S: Scalar>(&mut self, alert: &RawAlert) -> Result<ContextVector<S>, ContextError> {
        let t = alert.event_time;
        if let Some(prev) = self.prev_time {
            if t < prev {
                return Err(ContextError::TimeRegression {
                    index: self.index,
                    time: t,
                    prev,
                });
            }
        }
        self.prev_time = Some(t);
        self.index += 1;

        let c = self.customers.intern(&alert.customer_id);
        let m = self.machines.intern(&alert.machine_id);
        let s = self.sensors.intern(&alert.sensor_id);
        let horizon = t - self.max_window;

        let cc = grow(&mut self.customer_counts, c);
        cc.push(t);
        cc.prune(horizon);
        let mc = grow(&mut self.machine_counts, m);
        mc.push(t);
        mc.prune(horizon);
        let sc = grow(&mut self.sensor_counts, s);
        sc.push(t);
        sc.prune(horizon);
        let pc = self.pair_counts.entry((c, s)).or_default();
        pc.push(t);
        pc.prune(horizon);
        let ms = grow(&mut self.machine_severity, m);
        ms.push(t, alert.severity);
        ms.prune(horizon);
        let ss = grow(&mut self.sensor_severity, s);
        ss.push(t, alert.severity);
        ss.prune(horizon);
        for (state, entity) in [
            (grow(&mut self.customer_sensors, c), s),
            (grow(&mut self.customer_machines, c), m),
            (grow(&mut self.sensor_machines, s), m),
            (grow(&mut self.sensor_customers, s), c),
        ] {
            state.fire(entity, t);
            state.prune(horizon);
        }

        let windows = &self.config.windows;
        let mut values = Vec::with_capacity(self.config.width());
        for predicate in &self.config.predicates {
            match predicate {
                Predicate::CustomerAlerts => {
                    count_values(&self.customer_counts[c as usize], t, windows, &mut values)
                }
                Predicate::MachineAlerts => {
                    count_values(&self.machine_counts[m as usize], t, windows, &mut values)
                }
                Predicate::SensorAlerts => {
                    count_values(&self.sensor_counts[s as usize], t, windows, &mut values)
                }
                Predicate::MachineMeanSeverity => {
                    mean_values(&self.machine_severity[m as usize], t, windows, &mut values)
                }
                Predicate::SensorMeanSeverity => {
                    mean_values(&self.sensor_severity[s as usize], t, windows, &mut values)
                }
                Predicate::CustomerDistinctSensors => {
                    distinct_values(&self.customer_sensors[c as usize], t, windows, &mut values)
                }
                Predicate::CustomerDistinctMachines => {
                    distinct_values(&self.customer_machines[c as usize], t, windows, &mut values)
                }
                Predicate::SensorDistinctMachines => {
                    distinct_values(&self.sensor_machines[s as usize], t, windows, &mut values)
                }
                Predicate::SensorDistinctCustomers => {
                    distinct_values(&self.sensor_customers[s as usize], t, windows, &mut values)
                }
                Predicate::CustomerSensorAlerts => {
                    count_values(&self.pair_counts[&(c, s)], t, windows, &mut values)
                }
            }
        }
        Ok(ContextVector {
            alert_id: alert.alert_id.clone(),
            values,
        })
    }
}

fn count_values<S: Scalar>(state: &CountState, t: i64, windows: &[u64], out: &mut Vec<S>) {
    for &w in windows {
        out.push(S::of(state.count_since(t - w as i64) as f64));
    }
}

fn mean_values<S: Scalar>(state: &SumState, t: i64, windows: &[u64], out: &mut Vec<S>) {
    for &w in windows {
        let (sum, count) = state.sum_since(t - w as i64);
        out.push(S::of(if count == 0 { 0.0 } else { sum / count as f64 }));
    }
}

fn distinct_values<S: Scalar>(state: &LastSeenState, t: i64, windows: &[u64], out: &mut Vec<S>) {
    let (times, suffix) = state.snapshot();
    for &w in windows {
        let idx = times.partition_point(|&x| x <= t - w as i64);
        out.push(S::of(suffix[idx] as f64));
    }
}

/// Context vectors for a whole chronological stream.
pub fn compute_context_stream<S: Scalar>(
    alerts: &[RawAlert],
    config: &ContextConfig,
) -> Result<Vec<ContextVector<S>>, ContextError> {
    let mut stream = ContextStream::new(config.clone())?;
    alerts.iter().map(|a| stream.push(a)).collect()
}

/// Definitionally-correct context vector for one alert: a direct rescan of
/// the stream prefix per predicate and window. Quadratic; used as the oracle
/// for the streaming implementation.
pub fn brute_force_context<S: Scalar>(
    alerts: &[RawAlert],
    index: usize,
    config: &ContextConfig,
) -> Result<ContextVector<S>, ContextError> {
    config.validate()?;
    if index >= alerts.len() {
        return Err(ContextError::IndexOutOfRange {
            index,
            len: alerts.len(),
        });
    }
    let target = &alerts[index];
    let t = target.event_time;
    let prefix = &alerts[..=index];
    let mut values = Vec::with_capacity(config.width());
    for predicate in &config.predicates {
        for &w in &config.windows {
            let cutoff = t - w as i64;
            let in_window = prefix.iter().filter(|a| a.event_time > cutoff);
            let value = match predicate {
                Predicate::CustomerAlerts => in_window
                    .filter(|a| a.customer_id == target.customer_id)
                    .count() as f64,
                Predicate::MachineAlerts => in_window
                    .filter(|a| a.machine_id == target.machine_id)
                    .count() as f64,
                Predicate::SensorAlerts => in_window
                    .filter(|a| a.sensor_id == target.sensor_id)
                    .count() as f64,
                Predicate::MachineMeanSeverity => {
                    let mut sum = 0.0;
                    let mut count = 0usize;
                    for a in in_window.filter(|a| a.machine_id == target.machine_id) {
                        sum += a.severity;
                        count += 1;
                    }
                    if count == 0 {
                        0.0
                    } else {
                        sum / count as f64
                    }
                }
                Predicate::SensorMeanSeverity => {
                    let mut sum = 0.0;
                    let mut count = 0usize;
                    for a in in_window.filter(|a| a.sensor_id == target.sensor_id) {
                        sum += a.severity;
                        count += 1;
                    }
                    if count == 0 {
                        0.0
                    } else {
                        sum / count as f64
                    }
                }
                Predicate::CustomerDistinctSensors => in_window
                    .filter(|a| a.customer_id == target.customer_id)
                    .map(|a| a.sensor_id.as_str())
                    .collect::<HashSet<_>>()
                    .len() as f64,
                Predicate::CustomerDistinctMachines => in_window
                    .filter(|a| a.customer_id == target.customer_id)
                    .map(|a| a.machine_id.as_str())
                    .collect::<HashSet<_>>()
                    .len() as f64,
                Predicate::SensorDistinctMachines => in_window
                    .filter(|a| a.sensor_id == target.sensor_id)
                    .map(|a| a.machine_id.as_str())
                    .collect::<HashSet<_>>()
                    .len() as f64,
                Predicate::SensorDistinctCustomers => in_window
                    .filter(|a| a.sensor_id == target.sensor_id)
                    .map(|a| a.customer_id.as_str())
                    .collect::<HashSet<_>>()
                    .len() as f64,
                Predicate::CustomerSensorAlerts => in_window
                    .filter(|a| {
                        a.customer_id == target.customer_id && a.sensor_id == target.sensor_id
                    })
                    .count() as f64,
            };
            values.push(S::of(value));
        }
    }
    Ok(ContextVector {
        alert_id: target.alert_id.clone(),
        values,
    })
}
