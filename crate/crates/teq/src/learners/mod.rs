//! From-scratch supervised learners producing actionability scores in [0, 1].
//!
//! Four families cover the usual bases: logistic regression as the linear
//! baseline, a random forest and second-order gradient-boosted trees for the
//! tree methods, and a one-hidden-layer feed-forward net. Hyperparameters are
//! fixed, conservative defaults; training is deterministic given the seed,
//! down to the serialized model bytes.

pub mod boost;
pub mod forest;
pub mod linear;
pub mod mlp;
mod split;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::DenseMatrix;
use crate::num::Scalar;
use crate::util::fnv64;

const MODEL_FILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training needs at least two rows, got {0}")]
    TooFewRows(usize),
    #[error("features and labels length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("feature matrix contains non-finite values")]
    NonFinite,
    #[error("feature width mismatch: model expects {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("unsupported model file version {0} (expected {MODEL_FILE_VERSION})")]
    VersionMismatch(u32),
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Learner families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Lr,
    Rf,
    Gbt,
    Mlp,
}

pub const ALL_ALGORITHMS: [Algorithm; 4] =
    [Algorithm::Lr, Algorithm::Rf, Algorithm::Gbt, Algorithm::Mlp];

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Lr => "lr",
            Algorithm::Rf => "rf",
            Algorithm::Gbt => "gbt",
            Algorithm::Mlp => "mlp",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lr" => Ok(Algorithm::Lr),
            "rf" => Ok(Algorithm::Rf),
            "gbt" => Ok(Algorithm::Gbt),
            "mlp" => Ok(Algorithm::Mlp),
            other => Err(format!(
                "unknown algorithm '{other}' (expected lr|rf|gbt|mlp)"
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LrParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for LrParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 500,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RfParams {
    pub trees: usize,
    pub min_samples_split: usize,
    /// `None` grows trees until purity.
    pub max_depth: Option<usize>,
}

impl Default for RfParams {
    fn default() -> Self {
        Self {
            trees: 100,
            min_samples_split: 2,
            max_depth: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GbtParams {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            rounds: 100,
            max_depth: 6,
            learning_rate: 0.3,
            l2: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: 64,
            batch_size: 128,
            learning_rate: 0.01,
            epochs: 50,
        }
    }
}

/// Algorithm choice, seed, and per-family hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub seed: u64,
    #[serde(default)]
    pub lr: LrParams,
    #[serde(default)]
    pub rf: RfParams,
    #[serde(default)]
    pub gbt: GbtParams,
    #[serde(default)]
    pub mlp: MlpParams,
}

impl TrainConfig {
    pub fn new(algorithm: Algorithm, seed: u64) -> Self {
        Self {
            algorithm,
            seed,
            lr: LrParams::default(),
            rf: RfParams::default(),
            gbt: GbtParams::default(),
            mlp: MlpParams::default(),
        }
    }
}

/// Training provenance recorded alongside the fitted parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelMeta {
    pub algorithm: Algorithm,
    pub feature_width: usize,
    pub seed: u64,
    /// Content hash of the training matrix and labels.
    pub data_hash: u64,
    /// Monitored training loss: per-epoch for LR/MLP, per-round for GBT.
    pub train_loss: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
#[serde(rename_all = "snake_case")]
pub enum ModelKind<S> {
    Linear(linear::LinearModel<S>),
    Forest(forest::Forest<S>),
    Boosted(boost::BoostedTrees<S>),
    Mlp(mlp::MlpModel<S>),
}

/// A fitted learner. Scores are always in [0, 1].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct TrainedModel<S> {
    pub meta: ModelMeta,
    pub kind: ModelKind<S>,
}

fn validate_training<S: Scalar>(x: &DenseMatrix<S>, y: &[bool]) -> Result<(), TrainError> {
    if x.rows() != y.len() {
        return Err(TrainError::LengthMismatch(x.rows(), y.len()));
    }
    if x.rows() < 2 {
        return Err(TrainError::TooFewRows(x.rows()));
    }
    if !x.all_finite() {
        return Err(TrainError::NonFinite);
    }
    let pos = y.iter().filter(|&&l| l).count();
    if pos == 0 || pos == y.len() {
        return Err(TrainError::SingleClass);
    }
    Ok(())
}

fn data_hash<S: Scalar>(x: &DenseMatrix<S>, y: &[bool]) -> u64 {
    let mut bytes = Vec::with_capacity(16 + x.data().len() * 8 + y.len());
    bytes.extend_from_slice(&(x.rows() as u64).to_le_bytes());
    bytes.extend_from_slice(&(x.cols() as u64).to_le_bytes());
    for v in x.data() {
        bytes.extend_from_slice(&v.as_f64().to_bits().to_le_bytes());
    }
    bytes.extend(y.iter().map(|&l| l as u8));
    fnv64(&bytes)
}

/// Train a model on alert-level features and binary actionability labels.
pub fn train<S: Scalar>(
    x: &DenseMatrix<S>,
    y: &[bool],
    config: &TrainConfig,
) -> Result<TrainedModel<S>, TrainError> {
    validate_training(x, y)?;
    let (kind, train_loss) = match config.algorithm {
        Algorithm::Lr => {
            let (model, losses) = linear::train_lr(x, y, &config.lr);
            (ModelKind::Linear(model), losses)
        }
        Algorithm::Rf => {
            let model = forest::train_forest(x, y, &config.rf, config.seed);
            (ModelKind::Forest(model), Vec::new())
        }
        Algorithm::Gbt => {
            let (model, losses) = boost::train_gbt(x, y, &config.gbt);
            (ModelKind::Boosted(model), losses)
        }
        Algorithm::Mlp => {
            let (model, losses) = mlp::train_mlp(x, y, &config.mlp, config.seed);
            (ModelKind::Mlp(model), losses)
        }
    };
    Ok(TrainedModel {
        meta: ModelMeta {
            algorithm: config.algorithm,
            feature_width: x.cols(),
            seed: config.seed,
            data_hash: data_hash(x, y),
            train_loss,
        },
        kind,
    })
}

impl<S: Scalar> TrainedModel<S> {
    pub fn algorithm(&self) -> Algorithm {
        self.meta.algorithm
    }

    /// Score one feature row.
    pub fn predict_one(&self, row: &[S]) -> Result<S, TrainError> {
        if row.len() != self.meta.feature_width {
            return Err(TrainError::WidthMismatch {
                expected: self.meta.feature_width,
                got: row.len(),
            });
        }
        Ok(match &self.kind {
            ModelKind::Linear(m) => m.predict_row(row),
            ModelKind::Forest(m) => m.predict_row(row),
            ModelKind::Boosted(m) => m.predict_row(row),
            ModelKind::Mlp(m) => m.predict_row(row),
        })
    }

    /// Score a batch; pure, deterministic, parallel over rows.
    pub fn predict_proba(&self, x: &DenseMatrix<S>) -> Result<Vec<S>, TrainError> {
        if x.cols() != self.meta.feature_width {
            return Err(TrainError::WidthMismatch {
                expected: self.meta.feature_width,
                got: x.cols(),
            });
        }
        use rayon::prelude::*;
        Ok((0..x.rows())
            .into_par_iter()
            .map(|i| match &self.kind {
                ModelKind::Linear(m) => m.predict_row(x.row(i)),
                ModelKind::Forest(m) => m.predict_row(x.row(i)),
                ModelKind::Boosted(m) => m.predict_row(x.row(i)),
                ModelKind::Mlp(m) => m.predict_row(x.row(i)),
            })
            .collect())
    }

    /// Serialize to the versioned on-disk document.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        #[serde(bound(serialize = "S: Scalar"))]
        struct ModelFile<'a, S> {
            version: u32,
            model: &'a TrainedModel<S>,
        }
        serde_json::to_string(&ModelFile {
            version: MODEL_FILE_VERSION,
            model: self,
        })
        .expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        #[derive(Deserialize)]
        #[serde(bound(deserialize = "S: Scalar"))]
        struct ModelFile<S> {
            version: u32,
            model: TrainedModel<S>,
        }
        let file: ModelFile<S> =
            serde_json::from_str(text).map_err(|e| TrainError::Corrupt(e.to_string()))?;
        if file.version != MODEL_FILE_VERSION {
            return Err(TrainError::VersionMismatch(file.version));
        }
        Ok(file.model)
    }
}

/// Write a model to disk as a versioned document.
pub fn save_model<S: Scalar, P: AsRef<std::path::Path>>(
    model: &TrainedModel<S>,
    path: P,
) -> Result<(), TrainError> {
    std::fs::write(path, model.to_json())?;
    Ok(())
}

/// Load a model saved by [`save_model`]. `load(save(m))` predicts
/// identically to `m` on any input.
pub fn load_model<S: Scalar, P: AsRef<std::path::Path>>(
    path: P,
) -> Result<TrainedModel<S>, TrainError> {
    TrainedModel::from_json(&std::fs::read_to_string(path)?)
}

pub(crate) fn sigmoid<S: Scalar>(z: S) -> S {
    S::one() / (S::one() + (-z).exp())
}

/// Binary cross-entropy of a probability against a boolean label, clamped
/// away from log(0).
pub(crate) fn bce(p: f64, y: bool) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Differentiable families covered by the finite-difference gradient check.
#[derive(Debug, Clone, Copy)]
pub enum CheckFamily {
    /// Regularized logistic loss; `l2 = 0` reduces to the bare data loss.
    LogisticRegression {
        l2: f64,
    },
    Mlp {
        hidden: usize,
    },
}

/// Compare the analytic loss gradient at a random parameter/input point
/// against central finite differences (`h = 1e-5`). Returns the relative
/// error between the two gradient vectors.
pub fn gradient_check(family: CheckFamily, dim: usize, seed: u64) -> f64 {
    match family {
        CheckFamily::LogisticRegression { l2 } => linear::gradient_check_lr(dim, l2, seed),
        CheckFamily::Mlp { hidden } => mlp::gradient_check_mlp(dim, hidden, seed),
    }
}

/// Relative error between two gradient vectors.
pub(crate) fn gradient_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    diff / na.max(nn).max(1e-12)
}

/// Central finite differences of a scalar function of a parameter vector.
pub(crate) fn central_differences<F: FnMut(&[f64]) -> f64>(
    params: &[f64],
    mut loss: F,
    h: f64,
) -> Vec<f64> {
    let mut theta = params.to_vec();
    let mut grad = vec![0.0; params.len()];
    for i in 0..params.len() {
        let orig = theta[i];
        theta[i] = orig + h;
        let up = loss(&theta);
        theta[i] = orig - h;
        let down = loss(&theta);
        theta[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}
