//! Seeded synthetic SOC dataset generator.
//!
//! Produces a chronological alert stream with the pathologies the pipeline
//! has to survive: heavy-tailed customer volumes, sensor-specific schemas
//! with sparsely populated fields, bursty sensor noise, identifier-named
//! columns, and planted attack incidents with a designated evidence alert.
//! Everything derives from one root seed; the same config yields
//! byte-identical files.
//!
//! Incidents are planned so that machine-scoped 24-hour grouping of the
//! emitted stream reconstructs exactly the planned incidents: anchors on one
//! machine stay far enough apart that windows cannot chain.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alert::{incident_id, IncidentRecord, LabelRule, RawAlert};
use crate::util::derive_seed;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Archetype mixture drift. The drifted attack archetype takes a share of
/// positive incidents from `start_month` on, introducing field values (and
/// paths) the earlier months never contained.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DriftConfig {
    /// 0-based month index where drift begins.
    pub start_month: usize,
    /// Drifted share of positives within the start month.
    pub start_share: f64,
    /// Drifted share of positives after the start month.
    pub full_share: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub months: usize,
    pub month_secs: u64,
    /// Unix time of the first month's start.
    pub origin_time: i64,
    pub customers: usize,
    /// Zipf exponent for customer incident volume.
    pub zipf_exponent: f64,
    pub sensors: usize,
    /// Planned incidents per month, before burst extras.
    pub incidents_per_month: usize,
    /// Fraction of planned incidents that are actionable.
    pub positive_fraction: f64,
    /// Burst episodes per month (clusters of false alerts from one sensor on
    /// one estate).
    pub bursts_per_month: usize,
    /// Mean incidents per burst episode.
    pub burst_incidents: usize,
    /// Probability of flipping an incident label.
    pub label_noise: f64,
    /// Log-normal queue time parameters (seconds), independent of label.
    pub queue_log_mean: f64,
    pub queue_log_std: f64,
    pub drift: Option<DriftConfig>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 20_220_101,
            months: 8,
            month_secs: 2_592_000,
            origin_time: 1_640_995_200,
            customers: 120,
            zipf_exponent: 1.2,
            sensors: 45,
            incidents_per_month: 2_020,
            positive_fraction: 0.22,
            bursts_per_month: 6,
            burst_incidents: 18,
            label_noise: 0.0,
            queue_log_mean: 7.495,
            queue_log_std: 1.0,
            drift: None,
        }
    }
}

impl SynthConfig {
    /// The bundled drift-shock preset: a new attack family appears late in
    /// the stream and ramps up, so a frozen model decays while monthly
    /// retraining recovers.
    pub fn drift_shock() -> Self {
        Self {
            drift: Some(DriftConfig {
                start_month: 5,
                start_share: 0.2,
                full_share: 0.65,
            }),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.months == 0 || self.customers == 0 || self.sensors < 5 {
            return Err(SynthError::InvalidConfig(
                "months and customers must be positive, sensors at least 5".into(),
            ));
        }
        if self.incidents_per_month == 0 {
            return Err(SynthError::InvalidConfig(
                "incidents_per_month must be positive".into(),
            ));
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return Err(SynthError::InvalidConfig(
                "positive_fraction must be inside (0, 1); archetypes need both labels".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return Err(SynthError::InvalidConfig(
                "label_noise must be in [0, 1)".into(),
            ));
        }
        if self.zipf_exponent <= 0.0 || self.month_secs < 86_400 * 2 {
            return Err(SynthError::InvalidConfig(
                "zipf_exponent must be positive and months at least two days".into(),
            ));
        }
        if let Some(d) = self.drift {
            if d.start_month >= self.months
                || !(0.0..=1.0).contains(&d.start_share)
                || !(0.0..=1.0).contains(&d.full_share)
            {
                return Err(SynthError::InvalidConfig(
                    "drift config out of range".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn total_span(&self) -> (i64, i64) {
        (
            self.origin_time,
            self.origin_time + (self.months as u64 * self.month_secs) as i64,
        )
    }
}

/// Per-incident ground truth emitted next to the label file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub incident_id: String,
    pub archetype: String,
    pub rule: LabelRule,
    pub actionable: bool,
    /// The planted "smoking gun" alert, present for actionable incidents.
    pub evidence_alert_id: Option<String>,
    pub queue_time: f64,
}

/// A generated dataset, ready to write or to feed the pipeline directly.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub alerts: Vec<RawAlert>,
    pub incident_records: Vec<IncidentRecord>,
    pub ground_truth: Vec<GroundTruthRecord>,
}

impl SynthDataset {
    pub fn write_jsonl<P: AsRef<std::path::Path>>(
        &self,
        alerts_path: P,
        incidents_path: P,
        ground_truth_path: P,
    ) -> Result<(), SynthError> {
        let mut alerts = String::new();
        for a in &self.alerts {
            alerts.push_str(&serde_json::to_string(a).expect("alert serializes"));
            alerts.push('\n');
        }
        std::fs::write(alerts_path, alerts)?;
        let mut incidents = String::new();
        for r in &self.incident_records {
            incidents.push_str(&serde_json::to_string(r).expect("record serializes"));
            incidents.push('\n');
        }
        std::fs::write(incidents_path, incidents)?;
        let mut gt = String::new();
        for r in &self.ground_truth {
            gt.push_str(&serde_json::to_string(r).expect("record serializes"));
            gt.push('\n');
        }
        std::fs::write(ground_truth_path, gt)?;
        Ok(())
    }
}

/// Load a ground-truth file keyed by incident id.
pub fn load_ground_truth<P: AsRef<std::path::Path>>(
    path: P,
) -> Result<HashMap<String, GroundTruthRecord>, SynthError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: GroundTruthRecord = serde_json::from_str(line)
            .map_err(|e| SynthError::InvalidConfig(format!("ground truth line {}: {e}", i + 1)))?;
        out.insert(rec.incident_id.clone(), rec);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Sensor schema templates
// ---------------------------------------------------------------------------

#[derive(Clone)]
enum FieldKind {
    /// Mirrors the envelope severity.
    Weight,
    /// Quantized uniform numeric draw.
    Numeric {
        lo: f64,
        hi: f64,
        steps_per_unit: f64,
    },
    /// Uniform pick from a value pool.
    Categorical(Vec<String>),
    /// 1-3 entries from a pool, emitted as a JSON array.
    Tags(Vec<String>),
    /// Random hex token; the column name carries an identifier token, so the
    /// featurizer must drop it.
    IdentifierJunk,
}

#[derive(Clone)]
struct FieldDef {
    path: String,
    kind: FieldKind,
    missing_prob: f64,
}

struct SensorTemplate {
    fields: Vec<FieldDef>,
}

fn shared_fields() -> Vec<(FieldDef, f64)> {
    // (field, probability a sensor template includes it)
    let cat =
        |values: &[&str]| FieldKind::Categorical(values.iter().map(|s| s.to_string()).collect());
    vec![
        (
            FieldDef {
                path: "rule.weight".into(),
                kind: FieldKind::Weight,
                missing_prob: 0.02,
            },
            1.0,
        ),
        (
            FieldDef {
                path: "event.category".into(),
                kind: cat(&["malware", "network", "persistence", "execution", "policy"]),
                missing_prob: 0.05,
            },
            1.0,
        ),
        (
            FieldDef {
                path: "host.os".into(),
                kind: cat(&["windows", "linux", "macos"]),
                missing_prob: 0.25,
            },
            0.8,
        ),
        (
            FieldDef {
                path: "proc.name".into(),
                kind: cat(&[
                    "svchost.exe",
                    "chrome.exe",
                    "explorer.exe",
                    "outlook.exe",
                    "bash",
                    "python",
                    "java",
                    "winword.exe",
                    "powershell.exe",
                    "sshd",
                ]),
                missing_prob: 0.35,
            },
            0.75,
        ),
        (
            FieldDef {
                path: "proc.parent.name".into(),
                kind: cat(&[
                    "services.exe",
                    "explorer.exe",
                    "init",
                    "systemd",
                    "w3wp.exe",
                ]),
                missing_prob: 0.55,
            },
            0.5,
        ),
        (
            FieldDef {
                path: "net.remote_port".into(),
                kind: FieldKind::Numeric {
                    lo: 1.0,
                    hi: 65_535.0,
                    steps_per_unit: 1.0,
                },
                missing_prob: 0.7,
            },
            0.45,
        ),
        (
            FieldDef {
                path: "file.path_depth".into(),
                kind: FieldKind::Numeric {
                    lo: 1.0,
                    hi: 12.0,
                    steps_per_unit: 1.0,
                },
                missing_prob: 0.65,
            },
            0.45,
        ),
        (
            FieldDef {
                path: "tags".into(),
                kind: FieldKind::Tags(
                    ["edr", "av", "network", "lateral"]
                        .iter()
                        .map(|s| s.to_string())
                        .collect(),
                ),
                missing_prob: 0.4,
            },
            0.55,
        ),
        (
            FieldDef {
                path: "session_id".into(),
                kind: FieldKind::IdentifierJunk,
                missing_prob: 0.3,
            },
            0.6,
        ),
        (
            FieldDef {
                path: "event.ingest_time".into(),
                kind: FieldKind::Numeric {
                    lo: 1.6e9,
                    hi: 1.7e9,
                    steps_per_unit: 1.0,
                },
                missing_prob: 0.1,
            },
            0.5,
        ),
    ]
}

/// Sensors share a detector-family schema (`det.gNN.*`): many sensors, a
/// bounded set of detector namespaces with family-specific signature pools.
/// Family columns stay sparse (alerts from other families miss them) without
/// the encoded width growing per sensor.
const DETECTOR_FAMILIES: usize = 12;

fn build_sensors(count: usize, rng: &mut ChaCha20Rng) -> Vec<SensorTemplate> {
    let shared = shared_fields();
    (0..count)
        .map(|sid| {
            let mut fields: Vec<FieldDef> = shared
                .iter()
                .filter(|(_, include_prob)| rng.random::<f64>() < *include_prob)
                .map(|(f, _)| f.clone())
                .collect();
            let family = sid % DETECTOR_FAMILIES;
            let signatures: Vec<String> = (0..5).map(|k| format!("sig-g{family:02}-{k}")).collect();
            fields.push(FieldDef {
                path: format!("det.g{family:02}.signature"),
                kind: FieldKind::Categorical(signatures),
                missing_prob: 0.1,
            });
            fields.push(FieldDef {
                path: format!("det.g{family:02}.score"),
                kind: FieldKind::Numeric {
                    lo: 0.0,
                    hi: 100.0,
                    steps_per_unit: 4.0,
                },
                missing_prob: 0.45,
            });
            SensorTemplate { fields }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Archetypes
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq)]
enum Overlay {
    Category(&'static str),
    ThreatName(&'static [&'static str]),
    ThreatStage(&'static [&'static str]),
    ProcName(&'static [&'static str]),
    ParentName(&'static str),
    TagsExact(&'static [&'static str]),
    BeaconSignature(&'static str),
    BeaconInterval,
}

struct Archetype {
    name: &'static str,
    rule: LabelRule,
    /// Mixture weight within its label class.
    weight: f64,
    alerts: (usize, usize),
    severity_mean: f64,
    severity_std: f64,
    /// Applied to every alert of the incident.
    overlay: &'static [Overlay],
    /// Applied to the evidence alert only.
    evidence: &'static [Overlay],
    /// Probability the attack leaves distinctive content behind at all.
    /// The rest of the incidents are stealthy: no overlays anywhere and
    /// noise-level severity, distinguishable only by luck.
    evidence_prob: f64,
    /// For false-alert archetypes: probability one alert mimics attack
    /// evidence (a false IOC), keeping the classes inseparable.
    false_ioc_prob: f64,
    drifted: bool,
}

/// Deceptive content planted on some false alerts: category, threat name,
/// process, and (via a severity override at planning time) the rule weight
/// all mimic real attack evidence.
const FALSE_IOC: [Overlay; 3] = [
    Overlay::Category("execution"),
    Overlay::ThreatName(&["Mimikatz", "Encryptor", "GenericTrojan"]),
    Overlay::ProcName(&["mimikatz.exe", "encryptor.exe", "powershell.exe"]),
];

const ARCHETYPES: [Archetype; 7] = [
    Archetype {
        name: "noisy_rule",
        rule: LabelRule::FalseAlert,
        weight: 0.62,
        alerts: (1, 4),
        severity_mean: 38.0,
        severity_std: 10.0,
        overlay: &[],
        evidence: &[],
        evidence_prob: 1.0,
        false_ioc_prob: 0.10,
        drifted: false,
    },
    // Contained malware also carries threat names, so the mere presence of
    // an identified threat never separates actionable from contained.
    Archetype {
        name: "av_cleaned",
        rule: LabelRule::ContainedTruePositive,
        weight: 0.22,
        alerts: (1, 3),
        severity_mean: 52.0,
        severity_std: 12.0,
        overlay: &[
            Overlay::Category("malware"),
            Overlay::ThreatName(&["CredDump", "Encryptor", "GenericTrojan"]),
            Overlay::ThreatStage(&["cleaned", "quarantined"]),
        ],
        evidence: &[],
        evidence_prob: 1.0,
        false_ioc_prob: 0.0,
        drifted: false,
    },
    Archetype {
        name: "policy_noise",
        rule: LabelRule::FalseAlert,
        weight: 0.16,
        alerts: (2, 5),
        severity_mean: 45.0,
        severity_std: 10.0,
        overlay: &[
            Overlay::Category("policy"),
            Overlay::ProcName(&["gpupdate.exe", "sccm.exe"]),
        ],
        evidence: &[],
        evidence_prob: 1.0,
        false_ioc_prob: 0.06,
        drifted: false,
    },
    Archetype {
        name: "credential_theft",
        rule: LabelRule::ManualRemediation,
        weight: 0.40,
        alerts: (3, 8),
        severity_mean: 62.0,
        severity_std: 14.0,
        overlay: &[Overlay::Category("execution")],
        evidence: &[
            Overlay::ThreatName(&["CredDump", "Mimikatz"]),
            Overlay::ProcName(&["mimikatz.exe", "lsassy.exe"]),
        ],
        evidence_prob: 0.9,
        false_ioc_prob: 0.0,
        drifted: false,
    },
    Archetype {
        name: "ransomware_foothold",
        rule: LabelRule::ManualRemediation,
        weight: 0.33,
        alerts: (4, 9),
        severity_mean: 70.0,
        severity_std: 13.0,
        overlay: &[Overlay::ThreatStage(&["foothold", "escalation"])],
        evidence: &[
            Overlay::ThreatName(&["Encryptor"]),
            Overlay::ProcName(&["encryptor.exe"]),
        ],
        evidence_prob: 0.9,
        false_ioc_prob: 0.0,
        drifted: false,
    },
    Archetype {
        name: "webshell",
        rule: LabelRule::ManualRemediation,
        weight: 0.27,
        alerts: (3, 7),
        severity_mean: 58.0,
        severity_std: 14.0,
        overlay: &[Overlay::ParentName("w3wp.exe")],
        evidence: &[
            Overlay::ThreatName(&["Webshell"]),
            Overlay::TagsExact(&["webshell", "persistence"]),
        ],
        evidence_prob: 0.85,
        false_ioc_prob: 0.0,
        drifted: false,
    },
    // Appears only under a drift config. Deliberately shaped like rule noise
    // in severity and alert volume: to a model trained before the drift the
    // only tell is categorical evidence it has never seen.
    Archetype {
        name: "implant_beacon",
        rule: LabelRule::ManualRemediation,
        weight: 0.0,
        alerts: (2, 4),
        severity_mean: 42.0,
        severity_std: 10.0,
        overlay: &[Overlay::Category("network")],
        evidence: &[
            Overlay::BeaconSignature("BeaconV2"),
            Overlay::ProcName(&["implant.bin"]),
            Overlay::BeaconInterval,
        ],
        evidence_prob: 0.95,
        false_ioc_prob: 0.0,
        drifted: true,
    },
];

fn pick_archetype(rng: &mut ChaCha20Rng, positive: bool, drift_share: f64) -> usize {
    if positive && drift_share > 0.0 && rng.random::<f64>() < drift_share {
        return ARCHETYPES
            .iter()
            .position(|a| a.drifted)
            .expect("drifted archetype");
    }
    let pool: Vec<usize> = ARCHETYPES
        .iter()
        .enumerate()
        .filter(|(_, a)| !a.drifted && a.rule.actionable() == positive)
        .map(|(i, _)| i)
        .collect();
    let total: f64 = pool.iter().map(|&i| ARCHETYPES[i].weight).sum();
    let mut draw = rng.random::<f64>() * total;
    for &i in &pool {
        draw -= ARCHETYPES[i].weight;
        if draw <= 0.0 {
            return i;
        }
    }
    *pool.last().expect("nonempty pool")
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// Separation required between anchors on one machine so that 24-hour
/// anchor-window grouping reconstructs the planned incidents exactly
/// (window + maximum alert spread + slack).
const MACHINE_SEPARATION_SECS: i64 = 86_400 + 8 * 3_600 + 660;
const MAX_INCIDENT_SPAN_SECS: i64 = 8 * 3_600;

fn quantize(value: f64, steps_per_unit: f64) -> f64 {
    (value * steps_per_unit).round() / steps_per_unit
}

fn set_path(body: &mut serde_json::Value, path: &str, value: serde_json::Value) {
    let mut cursor = body;
    let parts: Vec<&str> = path.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        if !cursor.get(*part).is_some_and(|v| v.is_object()) {
            cursor[*part] = serde_json::json!({});
        }
        cursor = cursor.get_mut(*part).expect("just inserted");
    }
    cursor[*parts.last().expect("nonempty path")] = value;
}

struct PlannedAlert {
    time: i64,
    sensor: usize,
    severity: f64,
    body: serde_json::Value,
}

struct PlannedIncident {
    customer: usize,
    machine: String,
    anchor: i64,
    archetype: usize,
    label: bool,
    queue_time: f64,
    evidence_idx: Option<usize>,
    alerts: Vec<PlannedAlert>,
}

struct Estate {
    machines: Vec<String>,
    sensor_pool: Vec<usize>,
}

struct Generator<'a> {
    config: &'a SynthConfig,
    sensors: Vec<SensorTemplate>,
    estates: Vec<Estate>,
    customer_cumweights: Vec<f64>,
    /// Anchors per machine, for separation checks.
    machine_anchors: HashMap<String, Vec<i64>>,
    queue_dist: LogNormal<f64>,
}

impl<'a> Generator<'a> {
    fn new(config: &'a SynthConfig) -> Result<Self, SynthError> {
        config.validate()?;
        let mut schema_rng = ChaCha20Rng::seed_from_u64(derive_seed(config.seed, &[1]));
        let sensors = build_sensors(config.sensors, &mut schema_rng);
        let mut estate_rng = ChaCha20Rng::seed_from_u64(derive_seed(config.seed, &[2]));
        let estates: Vec<Estate> = (0..config.customers)
            .map(|c| {
                let size = 2 + (30.0 / ((c + 1) as f64).powf(0.6)).round() as usize;
                let machines = (0..size).map(|m| format!("c{c:03}-m{m:02}")).collect();
                let mut sensor_pool: Vec<usize> = (0..config.sensors)
                    .filter(|_| estate_rng.random::<f64>() < 0.65)
                    .collect();
                if sensor_pool.is_empty() {
                    sensor_pool.push(c % config.sensors);
                }
                Estate {
                    machines,
                    sensor_pool,
                }
            })
            .collect();
        let mut cum = 0.0;
        let customer_cumweights: Vec<f64> = (0..config.customers)
            .map(|c| {
                cum += 1.0 / ((c + 1) as f64).powf(config.zipf_exponent);
                cum
            })
            .collect();
        let queue_dist = LogNormal::new(config.queue_log_mean, config.queue_log_std)
            .map_err(|e| SynthError::InvalidConfig(format!("queue time distribution: {e}")))?;
        Ok(Self {
            config,
            sensors,
            estates,
            customer_cumweights,
            machine_anchors: HashMap::new(),
            queue_dist,
        })
    }

    fn draw_customer(&self, rng: &mut ChaCha20Rng) -> usize {
        let total = *self.customer_cumweights.last().expect("customers");
        let draw = rng.random::<f64>() * total;
        self.customer_cumweights
            .partition_point(|&c| c < draw)
            .min(self.config.customers - 1)
    }

    /// Find a machine on the estate whose calendar can take an incident at
    /// `anchor`, starting from a random rotation. `None` if the estate is
    /// saturated around that time.
    fn place_on_machine(
        &mut self,
        customer: usize,
        anchor: i64,
        rng: &mut ChaCha20Rng,
    ) -> Option<String> {
        let estate = &self.estates[customer];
        let n = estate.machines.len();
        let start = rng.random_range(0..n);
        for k in 0..n {
            let machine = &estate.machines[(start + k) % n];
            let free = self.machine_anchors.get(machine).is_none_or(|anchors| {
                anchors
                    .iter()
                    .all(|&a| (a - anchor).abs() >= MACHINE_SEPARATION_SECS)
            });
            if free {
                self.machine_anchors
                    .entry(machine.clone())
                    .or_default()
                    .push(anchor);
                return Some(machine.clone());
            }
        }
        None
    }

    fn alert_body(
        &self,
        sensor: usize,
        severity: f64,
        overlays: &[&'static [Overlay]],
        rng: &mut ChaCha20Rng,
    ) -> serde_json::Value {
        let template = &self.sensors[sensor];
        let mut body = serde_json::json!({});
        for field in &template.fields {
            if rng.random::<f64>() < field.missing_prob {
                continue;
            }
            let value = match &field.kind {
                FieldKind::Weight => serde_json::json!(severity),
                FieldKind::Numeric {
                    lo,
                    hi,
                    steps_per_unit,
                } => {
                    let v = quantize(lo + rng.random::<f64>() * (hi - lo), *steps_per_unit);
                    serde_json::json!(v)
                }
                FieldKind::Categorical(pool) => {
                    serde_json::json!(pool[rng.random_range(0..pool.len())])
                }
                FieldKind::Tags(pool) => {
                    let n = rng.random_range(1..=2.min(pool.len()));
                    let mut picked: Vec<&String> = Vec::with_capacity(n);
                    while picked.len() < n {
                        let t = &pool[rng.random_range(0..pool.len())];
                        if !picked.contains(&t) {
                            picked.push(t);
                        }
                    }
                    // Sorted tag lists keep the array-as-string vocabulary
                    // to the unordered combinations.
                    picked.sort();
                    serde_json::json!(picked)
                }
                FieldKind::IdentifierJunk => {
                    serde_json::json!(format!("{:016x}", rng.random::<u64>()))
                }
            };
            set_path(&mut body, &field.path, value);
        }
        for overlay_set in overlays {
            for overlay in overlay_set.iter() {
                match overlay {
                    Overlay::Category(v) => {
                        set_path(&mut body, "event.category", serde_json::json!(v))
                    }
                    Overlay::ThreatName(pool) => set_path(
                        &mut body,
                        "threat.name",
                        serde_json::json!(pool[rng.random_range(0..pool.len())]),
                    ),
                    Overlay::ThreatStage(pool) => set_path(
                        &mut body,
                        "threat.stage",
                        serde_json::json!(pool[rng.random_range(0..pool.len())]),
                    ),
                    Overlay::ProcName(pool) => set_path(
                        &mut body,
                        "proc.name",
                        serde_json::json!(pool[rng.random_range(0..pool.len())]),
                    ),
                    Overlay::ParentName(v) => {
                        set_path(&mut body, "proc.parent.name", serde_json::json!(v))
                    }
                    Overlay::TagsExact(tags) => {
                        set_path(&mut body, "tags", serde_json::json!(tags))
                    }
                    Overlay::BeaconSignature(v) => {
                        set_path(&mut body, "beacon.signature", serde_json::json!(v))
                    }
                    Overlay::BeaconInterval => {
                        let ms = (rng.random_range(30..120) * 1_000) as f64;
                        set_path(&mut body, "net.beacon_ms", serde_json::json!(ms))
                    }
                }
            }
        }
        body
    }

    fn plan_incident(
        &mut self,
        month: usize,
        anchor_window: (i64, i64),
        positive: bool,
        forced_sensor: Option<usize>,
        forced_customer: Option<usize>,
        rng: &mut ChaCha20Rng,
    ) -> Option<PlannedIncident> {
        let drift_share = match (self.config.drift, positive) {
            (Some(d), true) => {
                if month < d.start_month {
                    0.0
                } else if month == d.start_month {
                    d.start_share
                } else {
                    d.full_share
                }
            }
            _ => 0.0,
        };
        let archetype_idx = pick_archetype(rng, positive, drift_share);
        let archetype = &ARCHETYPES[archetype_idx];
        let customer = forced_customer.unwrap_or_else(|| self.draw_customer(rng));
        let span = rng.random_range(1_800..MAX_INCIDENT_SPAN_SECS);
        let anchor = rng.random_range(anchor_window.0..anchor_window.1.max(anchor_window.0 + 1));
        let machine = self.place_on_machine(customer, anchor, rng)?;

        let stealthy = positive && rng.random::<f64>() >= archetype.evidence_prob;
        // Stealthy attacks also fire like background noise.
        let alert_range = if stealthy { (1, 3) } else { archetype.alerts };
        let count = rng.random_range(alert_range.0..=alert_range.1);
        let mut offsets: Vec<i64> = vec![0];
        for _ in 1..count {
            offsets.push(rng.random_range(0..span));
        }
        offsets.sort_unstable();
        let evidence_idx = positive.then(|| rng.random_range(0..count));
        let false_ioc_idx = (!positive
            && archetype.false_ioc_prob > 0.0
            && rng.random::<f64>() < archetype.false_ioc_prob)
            .then(|| rng.random_range(0..count));

        let severity_dist = if stealthy {
            Normal::new(42.0, 10.0).expect("stealth severity")
        } else {
            Normal::new(archetype.severity_mean, archetype.severity_std)
                .expect("archetype severity")
        };
        let ioc_severity_dist = Normal::new(60.0, 14.0).expect("false ioc severity");
        let sensor_pool = &self.estates[customer].sensor_pool;
        let alerts: Vec<PlannedAlert> = offsets
            .iter()
            .enumerate()
            .map(|(i, &offset)| {
                let sensor = forced_sensor
                    .unwrap_or_else(|| sensor_pool[rng.random_range(0..sensor_pool.len())]);
                let dist = if Some(i) == false_ioc_idx {
                    &ioc_severity_dist
                } else {
                    &severity_dist
                };
                let severity = quantize(dist.sample(rng).clamp(0.0, 100.0), 64.0);
                let mut overlays: Vec<&'static [Overlay]> = Vec::new();
                if !stealthy {
                    overlays.push(archetype.overlay);
                    if Some(i) == evidence_idx {
                        overlays.push(archetype.evidence);
                    }
                }
                if Some(i) == false_ioc_idx {
                    overlays.push(&FALSE_IOC);
                }
                let body = self.alert_body(sensor, severity, &overlays, rng);
                PlannedAlert {
                    time: anchor + offset,
                    sensor,
                    severity,
                    body,
                }
            })
            .collect();

        // Label noise flips the final label; evidence is recorded only for
        // incidents that end up positive.
        let mut label = positive;
        if self.config.label_noise > 0.0 && rng.random::<f64>() < self.config.label_noise {
            label = !label;
        }
        let queue_time = self.queue_dist.sample(rng).clamp(30.0, 259_200.0).round();
        Some(PlannedIncident {
            customer,
            machine,
            anchor,
            archetype: archetype_idx,
            label,
            queue_time,
            evidence_idx: if label { evidence_idx } else { None },
            alerts,
        })
    }
}

/// Generate the full dataset for a config.
pub fn generate_dataset(config: &SynthConfig) -> Result<SynthDataset, SynthError> {
    let mut generator = Generator::new(config)?;
    let mut incidents: Vec<PlannedIncident> = Vec::new();
    let positives_per_month =
        (config.incidents_per_month as f64 * config.positive_fraction).round() as usize;
    for month in 0..config.months {
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(config.seed, &[3, month as u64]));
        let month_start = config.origin_time + (month as u64 * config.month_secs) as i64;
        let month_end = month_start + config.month_secs as i64;
        let anchor_window = (month_start, month_end - MAX_INCIDENT_SPAN_SECS);
        for k in 0..config.incidents_per_month {
            let positive = k < positives_per_month;
            if let Some(inc) =
                generator.plan_incident(month, anchor_window, positive, None, None, &mut rng)
            {
                incidents.push(inc);
            }
        }
        // Burst episodes: one sensor hammers one estate with false alerts.
        for _ in 0..config.bursts_per_month {
            let sensor = rng.random_range(0..config.sensors);
            let customer = generator.draw_customer(&mut rng);
            let start = rng.random_range(anchor_window.0..anchor_window.1);
            let window = (
                start,
                (start + 6 * 3_600).min(anchor_window.1.max(start + 1)),
            );
            let count =
                config.burst_incidents / 2 + rng.random_range(0..config.burst_incidents.max(1));
            for _ in 0..count {
                if let Some(inc) = generator.plan_incident(
                    month,
                    window,
                    false,
                    Some(sensor),
                    Some(customer),
                    &mut rng,
                ) {
                    incidents.push(inc);
                }
            }
        }
    }

    incidents.sort_by(|a, b| (a.anchor, &a.machine).cmp(&(b.anchor, &b.machine)));

    // Flatten to a chronological alert stream and assign ids post-sort.
    let mut flat: Vec<(i64, usize, usize)> = Vec::new();
    for (inc_idx, inc) in incidents.iter().enumerate() {
        for (alert_idx, alert) in inc.alerts.iter().enumerate() {
            flat.push((alert.time, inc_idx, alert_idx));
        }
    }
    flat.sort_by(|a, b| {
        (a.0, &incidents[a.1].machine, incidents[a.1].anchor, a.2).cmp(&(
            b.0,
            &incidents[b.1].machine,
            incidents[b.1].anchor,
            b.2,
        ))
    });

    let mut alert_ids: HashMap<(usize, usize), String> = HashMap::new();
    let mut alerts = Vec::with_capacity(flat.len());
    for (seq, &(time, inc_idx, alert_idx)) in flat.iter().enumerate() {
        let inc = &incidents[inc_idx];
        let alert = &inc.alerts[alert_idx];
        let id = format!("a-{seq:07}");
        alert_ids.insert((inc_idx, alert_idx), id.clone());
        alerts.push(RawAlert {
            alert_id: id,
            event_time: time,
            customer_id: format!("c{:03}", inc.customer),
            machine_id: inc.machine.clone(),
            sensor_id: format!("s{:02}", alert.sensor),
            severity: alert.severity,
            body: alert.body.clone(),
        });
    }

    let mut incident_records = Vec::with_capacity(incidents.len());
    let mut ground_truth = Vec::with_capacity(incidents.len());
    for (inc_idx, inc) in incidents.iter().enumerate() {
        let id = incident_id(&inc.machine, inc.anchor);
        incident_records.push(IncidentRecord {
            incident_id: id.clone(),
            label: inc.label,
            queue_time: inc.queue_time,
        });
        let archetype = &ARCHETYPES[inc.archetype];
        ground_truth.push(GroundTruthRecord {
            incident_id: id,
            archetype: archetype.name.to_string(),
            rule: archetype.rule,
            actionable: inc.label,
            evidence_alert_id: inc.evidence_idx.map(|e| alert_ids[&(inc_idx, e)].clone()),
            queue_time: inc.queue_time,
        });
    }

    Ok(SynthDataset {
        alerts,
        incident_records,
        ground_truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alert::{group_incidents, parse_alerts, RecordPolicy};
    use std::io::Cursor;

    fn small_config() -> SynthConfig {
        SynthConfig {
            months: 2,
            customers: 30,
            sensors: 12,
            incidents_per_month: 150,
            bursts_per_month: 2,
            burst_incidents: 6,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let config = small_config();
        let a = generate_dataset(&config).unwrap();
        let b = generate_dataset(&config).unwrap();
        let ser = |d: &SynthDataset| {
            let mut text = String::new();
            for alert in &d.alerts {
                text.push_str(&serde_json::to_string(alert).unwrap());
            }
            for rec in &d.incident_records {
                text.push_str(&serde_json::to_string(rec).unwrap());
            }
            for gt in &d.ground_truth {
                text.push_str(&serde_json::to_string(gt).unwrap());
            }
            text
        };
        assert_eq!(ser(&a), ser(&b));
        let c = generate_dataset(&SynthConfig {
            seed: 999,
            ..config
        })
        .unwrap();
        assert_ne!(ser(&a), ser(&c));
    }

    #[test]
    fn stream_is_chronological_and_ingestable_without_skips() {
        let data = generate_dataset(&small_config()).unwrap();
        assert!(data
            .alerts
            .windows(2)
            .all(|w| w[0].event_time <= w[1].event_time));
        let mut text = String::new();
        for a in &data.alerts {
            text.push_str(&serde_json::to_string(a).unwrap());
            text.push('\n');
        }
        let (parsed, stats) = parse_alerts(Cursor::new(text), RecordPolicy::Abort).unwrap();
        assert_eq!(parsed.len(), data.alerts.len());
        assert_eq!(stats.skipped, 0);
    }

    #[test]
    fn grouping_reconstructs_planned_incidents_exactly() {
        let data = generate_dataset(&small_config()).unwrap();
        let grouped = group_incidents(&data.alerts);
        assert_eq!(grouped.len(), data.incident_records.len());
        let planned: std::collections::HashSet<&str> = data
            .incident_records
            .iter()
            .map(|r| r.incident_id.as_str())
            .collect();
        for inc in &grouped {
            assert!(
                planned.contains(inc.incident_id.as_str()),
                "unplanned {}",
                inc.incident_id
            );
        }
    }

    #[test]
    fn evidence_alerts_belong_to_their_positive_incidents() {
        let data = generate_dataset(&small_config()).unwrap();
        let grouped = group_incidents(&data.alerts);
        let by_id: HashMap<&str, &crate::alert::Incident> = grouped
            .iter()
            .map(|i| (i.incident_id.as_str(), i))
            .collect();
        let mut evidence_seen = 0usize;
        for gt in &data.ground_truth {
            match &gt.evidence_alert_id {
                Some(ev) => {
                    assert!(gt.actionable, "evidence on a negative incident");
                    let inc = by_id[gt.incident_id.as_str()];
                    assert!(inc.alert_ids.contains(ev), "evidence {ev} not a member");
                    evidence_seen += 1;
                }
                None => assert!(!gt.actionable || gt.queue_time >= 0.0),
            }
        }
        assert!(evidence_seen > 0);
    }

    #[test]
    fn positive_fraction_is_in_the_expected_band() {
        let data = generate_dataset(&small_config()).unwrap();
        let pos = data.incident_records.iter().filter(|r| r.label).count();
        let frac = pos as f64 / data.incident_records.len() as f64;
        // Bursts add negatives, so the realized fraction sits a little below
        // the planned one.
        assert!((0.12..=0.25).contains(&frac), "positive fraction {frac}");
    }

    #[test]
    fn zipf_top_customer_share_matches_closed_form() {
        let config = SynthConfig {
            customers: 100,
            months: 3,
            incidents_per_month: 1_200,
            bursts_per_month: 0,
            ..SynthConfig::default()
        };
        let data = generate_dataset(&config).unwrap();
        let expected = {
            let total: f64 = (1..=100).map(|r| 1.0 / (r as f64).powf(1.2)).sum();
            1.0 / total
        };
        let top = data
            .alerts
            .iter()
            .filter(|a| a.customer_id == "c000")
            .count() as f64
            / data.alerts.len() as f64;
        // Incident-level draws are Zipf; alert counts per incident add noise.
        assert!(
            (top - expected).abs() / expected < 0.12,
            "top share {top} vs closed form {expected}"
        );
    }

    /// Wilson-Hilferty approximation of the chi-square 95% critical value.
    fn chi2_crit_95(df: f64) -> f64 {
        let z = 1.6449;
        df * (1.0 - 2.0 / (9.0 * df) + z * (2.0 / (9.0 * df)).sqrt()).powi(3)
    }

    #[test]
    fn drift_free_monthly_mixtures_are_stationary() {
        let config = SynthConfig {
            months: 4,
            customers: 60,
            incidents_per_month: 900,
            bursts_per_month: 0,
            ..SynthConfig::default()
        };
        let data = generate_dataset(&config).unwrap();
        let names: Vec<&str> = ARCHETYPES
            .iter()
            .filter(|a| !a.drifted)
            .map(|a| a.name)
            .collect();
        let month_of = |id: &str| -> usize {
            let anchor: i64 = id.rsplit(':').next().unwrap().parse().unwrap();
            ((anchor - config.origin_time) as u64 / config.month_secs) as usize
        };
        let mut counts = vec![vec![0f64; names.len()]; config.months];
        for gt in &data.ground_truth {
            let m = month_of(&gt.incident_id);
            let k = names.iter().position(|&n| n == gt.archetype).unwrap();
            counts[m][k] += 1.0;
        }
        let row_totals: Vec<f64> = counts.iter().map(|r| r.iter().sum()).collect();
        let col_totals: Vec<f64> = (0..names.len())
            .map(|k| counts.iter().map(|r| r[k]).sum())
            .collect();
        let grand: f64 = row_totals.iter().sum();
        let mut chi2 = 0.0;
        for m in 0..config.months {
            for k in 0..names.len() {
                let expected = row_totals[m] * col_totals[k] / grand;
                if expected > 0.0 {
                    let d = counts[m][k] - expected;
                    chi2 += d * d / expected;
                }
            }
        }
        let df = ((config.months - 1) * (names.len() - 1)) as f64;
        assert!(
            chi2 < chi2_crit_95(df),
            "chi2 {chi2} exceeds critical at df {df}"
        );
    }

    #[test]
    fn drift_config_introduces_the_new_archetype_on_schedule() {
        let config = SynthConfig {
            months: 4,
            customers: 60,
            incidents_per_month: 600,
            bursts_per_month: 0,
            drift: Some(DriftConfig {
                start_month: 2,
                start_share: 0.3,
                full_share: 0.7,
            }),
            ..SynthConfig::default()
        };
        let data = generate_dataset(&config).unwrap();
        let month_of = |id: &str| -> usize {
            let anchor: i64 = id.rsplit(':').next().unwrap().parse().unwrap();
            ((anchor - config.origin_time) as u64 / config.month_secs) as usize
        };
        let mut drifted = vec![0usize; config.months];
        let mut positives = vec![0usize; config.months];
        for gt in &data.ground_truth {
            let m = month_of(&gt.incident_id);
            if gt.actionable {
                positives[m] += 1;
                if gt.archetype == "implant_beacon" {
                    drifted[m] += 1;
                }
            }
        }
        assert_eq!(drifted[0] + drifted[1], 0);
        let share2 = drifted[2] as f64 / positives[2] as f64;
        let share3 = drifted[3] as f64 / positives[3] as f64;
        assert!((share2 - 0.3).abs() < 0.1, "start month share {share2}");
        assert!((share3 - 0.7).abs() < 0.1, "post month share {share3}");
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        let bad = SynthConfig {
            positive_fraction: 0.0,
            ..SynthConfig::default()
        };
        assert!(matches!(
            generate_dataset(&bad),
            Err(SynthError::InvalidConfig(_))
        ));
        let bad = SynthConfig {
            months: 0,
            ..SynthConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SynthConfig {
            drift: Some(DriftConfig {
                start_month: 99,
                start_share: 0.5,
                full_share: 0.5,
            }),
            ..SynthConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sparse_fields_exist_in_the_corpus() {
        // A visible share of flattened columns must be mostly missing,
        // mirroring real multi-sensor feeds.
        let data = generate_dataset(&small_config()).unwrap();
        let records: Vec<crate::featurize::FlatRecord> = data
            .alerts
            .iter()
            .map(|a| crate::featurize::flatten_document(&a.body).unwrap())
            .collect();
        let profiles = crate::featurize::profile_columns(&records);
        let sparse = profiles
            .iter()
            .filter(|p| p.missing as f64 / p.observed as f64 > 0.5)
            .count();
        assert!(
            sparse * 2 >= profiles.len(),
            "{sparse} of {} columns are sparse",
            profiles.len()
        );
    }

    #[test]
    fn write_jsonl_round_trips_through_loaders() {
        let dir = tempfile::tempdir().unwrap();
        let data = generate_dataset(&SynthConfig {
            months: 1,
            customers: 10,
            incidents_per_month: 40,
            bursts_per_month: 0,
            ..SynthConfig::default()
        })
        .unwrap();
        let alerts_path = dir.path().join("alerts.jsonl");
        let incidents_path = dir.path().join("incidents.jsonl");
        let gt_path = dir.path().join("ground_truth.jsonl");
        data.write_jsonl(&alerts_path, &incidents_path, &gt_path)
            .unwrap();
        let (alerts, stats) = crate::alert::load_alerts(&alerts_path, RecordPolicy::Abort).unwrap();
        assert_eq!(alerts.len(), data.alerts.len());
        assert_eq!(stats.skipped, 0);
        let records = crate::alert::load_incident_records(&incidents_path).unwrap();
        assert_eq!(records.len(), data.incident_records.len());
        let gt = load_ground_truth(&gt_path).unwrap();
        assert_eq!(gt.len(), data.ground_truth.len());
    }
}
