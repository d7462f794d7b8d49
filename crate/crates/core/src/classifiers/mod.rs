//! Five classifier families behind one fit/predict interface, plus JSON model
//! persistence and finite-difference gradient checks.

pub mod forest;
pub mod logistic;
pub mod mlp;
pub mod naive_bayes;
pub mod svm;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::PostureLabel;
use crate::features::FeatureMatrix;
use crate::seed;

pub use forest::{ForestParams, MaxFeatures, RandomForest};
pub use logistic::{LogisticModel, LogisticParams};
pub use mlp::{Mlp, MlpParams};
pub use naive_bayes::{GaussianNb, GnbParams};
pub use svm::{LinearSvm, SvmParams};

/// Version written to and accepted from model files.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    #[error("non-finite input at row {row}, column {col}")]
    NonFiniteInput { row: usize, col: usize },
    #[error("invalid classifier spec: {0}")]
    InvalidSpec(String),
    #[error("feature mismatch: model expects {expected:?}, got {got:?}")]
    FeatureMismatch {
        expected: Vec<String>,
        got: Vec<String>,
    },
    #[error("model format version {found} is not supported (this build reads {supported})")]
    FormatVersionMismatch { found: u64, supported: u32 },
    #[error("corrupt model: {0}")]
    CorruptModel(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Rf,
    Gnb,
    Lr,
    Svm,
    Dnn,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Rf,
        Family::Gnb,
        Family::Lr,
        Family::Svm,
        Family::Dnn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Rf => "rf",
            Family::Gnb => "gnb",
            Family::Lr => "lr",
            Family::Svm => "svm",
            Family::Dnn => "dnn",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Family::Rf => "RF",
            Family::Gnb => "GNB",
            Family::Lr => "LR",
            Family::Svm => "SVM",
            Family::Dnn => "DNN",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown classifier family `{s}` (rf|gnb|lr|svm|dnn)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Hyperparams {
    Rf(ForestParams),
    Gnb(GnbParams),
    Lr(LogisticParams),
    Svm(SvmParams),
    Dnn(MlpParams),
}

impl Hyperparams {
    pub fn defaults(family: Family) -> Self {
        match family {
            Family::Rf => Hyperparams::Rf(ForestParams::default()),
            Family::Gnb => Hyperparams::Gnb(GnbParams::default()),
            Family::Lr => Hyperparams::Lr(LogisticParams::default()),
            Family::Svm => Hyperparams::Svm(SvmParams::default()),
            Family::Dnn => Hyperparams::Dnn(MlpParams::default()),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            Hyperparams::Rf(_) => Family::Rf,
            Hyperparams::Gnb(_) => Family::Gnb,
            Hyperparams::Lr(_) => Family::Lr,
            Hyperparams::Svm(_) => Family::Svm,
            Hyperparams::Dnn(_) => Family::Dnn,
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        match self {
            Hyperparams::Rf(p) => p.validate(),
            Hyperparams::Gnb(p) => p.validate(),
            Hyperparams::Lr(p) => p.validate(),
            Hyperparams::Svm(p) => p.validate(),
            Hyperparams::Dnn(p) => p.validate(),
        }
    }
}

/// Family, hyperparameters and seed. In JSON the hyperparameters sit beside
/// `family`, e.g. `{"family": "rf", "n_trees": 50, "seed": 7}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    #[serde(flatten)]
    pub hyper: Hyperparams,
    #[serde(default)]
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn new(family: Family, seed: u64) -> Self {
        Self {
            hyper: Hyperparams::defaults(family),
            seed,
        }
    }

    pub fn family(&self) -> Family {
        self.hyper.family()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            hyper: self.hyper.clone(),
            seed,
        }
    }
}

/// Non-fatal training diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FitWarning {
    /// The optimizer stopped at its iteration/epoch budget.
    Convergence { family: String, iterations: usize },
}

/// Mean and scale per feature, fit on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub(crate) fn fit(data: &TrainSet) -> Self {
        let n = data.n as f64;
        let mut mean = vec![0.0; data.d];
        for i in 0..data.n {
            mean.iter_mut().zip(data.x(i)).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; data.d];
        for i in 0..data.n {
            var.iter_mut()
                .zip(data.x(i).iter().zip(&mean))
                .for_each(|(s, (v, m))| *s += (v - m) * (v - m));
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub(crate) fn transform_all(&self, x: &[f64], d: usize) -> Vec<f64> {
        x.chunks(d).flat_map(|r| self.transform(r)).collect()
    }

    fn check(&self, d: usize) -> bool {
        self.mean.len() == d && self.scale.len() == d && self.scale.iter().all(|&s| s > 0.0)
    }
}

/// Dense training data with labels encoded as class indices.
#[derive(Debug, Clone)]
pub(crate) struct TrainSet {
    pub x: Vec<f64>,
    pub y: Vec<usize>,
    pub n: usize,
    pub d: usize,
    pub n_classes: usize,
}

impl TrainSet {
    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    /// Encodes labels against the sorted set of labels present.
    pub fn from_matrix(fm: &FeatureMatrix) -> Result<(Self, Vec<PostureLabel>), ClassifierError> {
        let mut classes: Vec<PostureLabel> = fm.labels().to_vec();
        classes.sort();
        classes.dedup();
        if classes.len() < 2 {
            return Err(ClassifierError::DegenerateLabels(format!(
                "need at least 2 classes, found {:?}",
                classes
            )));
        }
        if fm.n_cols() == 0 {
            return Err(ClassifierError::InvalidSpec(
                "feature matrix has no columns".into(),
            ));
        }
        let d = fm.n_cols();
        let mut x = Vec::with_capacity(fm.n_rows() * d);
        for (i, row) in fm.rows().enumerate() {
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(ClassifierError::NonFiniteInput { row: i, col: j });
            }
            x.extend_from_slice(row);
        }
        let y = fm
            .labels()
            .iter()
            .map(|l| classes.binary_search(l).expect("label from set"))
            .collect();
        Ok((
            Self {
                x,
                y,
                n: fm.n_rows(),
                d,
                n_classes: classes.len(),
            },
            classes,
        ))
    }
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

/// Index of the first maximum.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = k;
        }
    }
    best
}

/// Learned parameters, tagged by family in the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "lowercase")]
pub enum ModelParams {
    Rf(RandomForest),
    Gnb(GaussianNb),
    Lr(LogisticModel),
    Svm(LinearSvm),
    Dnn(Mlp),
}

/// A trained classifier together with the metadata needed to apply it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub format_version: u32,
    pub classes: Vec<PostureLabel>,
    pub feature_names: Vec<String>,
    pub seed: u64,
    #[serde(flatten)]
    pub params: ModelParams,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<FitWarning>,
}

/// Trains `spec` on every row of `fm`. Deterministic in `(spec, fm)`.
pub fn fit(spec: &ClassifierSpec, fm: &FeatureMatrix) -> Result<ClassifierModel, ClassifierError> {
    spec.hyper.validate()?;
    let (data, classes) = TrainSet::from_matrix(fm)?;
    let mut warnings = vec![];
    let params = match &spec.hyper {
        Hyperparams::Rf(p) => ModelParams::Rf(RandomForest::train(&data, p, spec.seed)),
        Hyperparams::Gnb(p) => ModelParams::Gnb(GaussianNb::train(&data, p)?),
        Hyperparams::Lr(p) => {
            let (m, w) = LogisticModel::train(&data, p);
            warnings.extend(w);
            ModelParams::Lr(m)
        }
        Hyperparams::Svm(p) => ModelParams::Svm(LinearSvm::train(&data, p, spec.seed)),
        Hyperparams::Dnn(p) => {
            let (m, w) = Mlp::train(&data, p, spec.seed);
            warnings.extend(w);
            ModelParams::Dnn(m)
        }
    };
    Ok(ClassifierModel {
        format_version: MODEL_FORMAT_VERSION,
        classes,
        feature_names: fm.names().to_vec(),
        seed: spec.seed,
        params,
        warnings,
    })
}

impl ClassifierModel {
    pub fn family(&self) -> Family {
        match self.params {
            ModelParams::Rf(_) => Family::Rf,
            ModelParams::Gnb(_) => Family::Gnb,
            ModelParams::Lr(_) => Family::Lr,
            ModelParams::Svm(_) => Family::Svm,
            ModelParams::Dnn(_) => Family::Dnn,
        }
    }

    /// Class probabilities for one feature row in training column order.
    pub fn predict_proba_row(&self, x: &[f64]) -> Vec<f64> {
        match &self.params {
            ModelParams::Rf(m) => m.proba(x),
            ModelParams::Gnb(m) => m.proba(x),
            ModelParams::Lr(m) => m.proba(x),
            ModelParams::Svm(m) => m.proba(x),
            ModelParams::Dnn(m) => m.proba(x),
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> PostureLabel {
        self.classes[argmax(&self.predict_proba_row(x))]
    }

    fn check_features(&self, fm: &FeatureMatrix) -> Result<(), ClassifierError> {
        if fm.names() != self.feature_names.as_slice() {
            return Err(ClassifierError::FeatureMismatch {
                expected: self.feature_names.clone(),
                got: fm.names().to_vec(),
            });
        }
        Ok(())
    }

    pub fn predict_proba(&self, fm: &FeatureMatrix) -> Result<Vec<Vec<f64>>, ClassifierError> {
        self.check_features(fm)?;
        Ok(fm.rows().map(|r| self.predict_proba_row(r)).collect())
    }

    /// Argmax of [`Self::predict_proba`], first maximum on ties.
    pub fn predict(&self, fm: &FeatureMatrix) -> Result<Vec<PostureLabel>, ClassifierError> {
        self.check_features(fm)?;
        Ok(fm.rows().map(|r| self.predict_row(r)).collect())
    }

    pub fn to_json(&self) -> Result<String, ClassifierError> {
        serde_json::to_string_pretty(self).map_err(|e| ClassifierError::CorruptModel(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ClassifierError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ClassifierError::CorruptModel(e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| ClassifierError::CorruptModel("missing format_version".into()))?;
        if version != u64::from(MODEL_FORMAT_VERSION) {
            return Err(ClassifierError::FormatVersionMismatch {
                found: version,
                supported: MODEL_FORMAT_VERSION,
            });
        }
        let model: ClassifierModel = serde_json::from_value(value)
            .map_err(|e| ClassifierError::CorruptModel(e.to_string()))?;
        model.check_shapes()?;
        Ok(model)
    }

    fn check_shapes(&self) -> Result<(), ClassifierError> {
        let (d, c) = (self.feature_names.len(), self.classes.len());
        let ok = c >= 2
            && d > 0
            && match &self.params {
                ModelParams::Rf(m) => m.n_classes == c && m.check(d),
                ModelParams::Gnb(m) => m.check(d, c),
                ModelParams::Lr(m) => m.check(d, c),
                ModelParams::Svm(m) => m.check(d, c),
                ModelParams::Dnn(m) => m.check(d, c),
            };
        if ok {
            Ok(())
        } else {
            Err(ClassifierError::CorruptModel(
                "parameter shapes disagree with feature/class counts".into(),
            ))
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifierError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Relative error used by [`gradient_check`]: `|a − b| / max(|a| + |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Step for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Compares the analytic loss gradient of an `lr` or `dnn` spec against
/// central finite differences over every parameter, at a random parameter
/// point drawn from `spec.seed`. Returns the maximum relative error.
pub fn gradient_check(spec: &ClassifierSpec, fm: &FeatureMatrix) -> Result<f64, ClassifierError> {
    if fm.n_rows() > 32 || fm.n_cols() > 16 {
        return Err(ClassifierError::InvalidSpec(format!(
            "gradient check expects n ≤ 32 and d ≤ 16, got {}×{}",
            fm.n_rows(),
            fm.n_cols()
        )));
    }
    spec.hyper.validate()?;
    let (data, _) = TrainSet::from_matrix(fm)?;
    let mut rng = seed::rng_for(spec.seed, &[0x6763]);
    match &spec.hyper {
        Hyperparams::Lr(p) => {
            let n_params = data.n_classes * data.d + data.n_classes;
            let point: Vec<f64> = (0..n_params).map(|_| rng.random_range(-0.5..0.5)).collect();
            let (_, grad) = logistic::loss_and_grad(&point, &data.x, &data.y, data.n_classes, p.l2);
            Ok(max_fd_error(&point, &grad, |q| {
                logistic::loss_and_grad(q, &data.x, &data.y, data.n_classes, p.l2).0
            }))
        }
        Hyperparams::Dnn(p) => {
            let mut sizes = vec![data.d];
            sizes.extend(&p.hidden);
            sizes.push(data.n_classes);
            let mut layers = mlp::init_layers(&sizes, &mut rng);
            for l in &mut layers {
                l.bias
                    .iter_mut()
                    .for_each(|b| *b = rng.random_range(-0.1..0.1));
            }
            let rows: Vec<usize> = (0..data.n).collect();
            let (_, grads) = mlp::loss_and_grad(&layers, &data.x, data.d, &data.y, &rows);
            let point = mlp::flatten(&layers);
            let mut scratch = layers.clone();
            Ok(max_fd_error(&point, &mlp::flatten(&grads), |q| {
                mlp::unflatten_into(&mut scratch, q);
                mlp::loss_and_grad(&scratch, &data.x, data.d, &data.y, &rows).0
            }))
        }
        other => Err(ClassifierError::InvalidSpec(format!(
            "gradient check applies to lr and dnn, not {}",
            other.family()
        ))),
    }
}

fn max_fd_error(point: &[f64], analytic: &[f64], mut loss: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut q = point.to_vec();
    let mut worst: f64 = 0.0;
    for j in 0..point.len() {
        q[j] = point[j] + FD_STEP;
        let up = loss(&q);
        q[j] = point[j] - FD_STEP;
        let down = loss(&q);
        q[j] = point[j];
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(analytic[j], numeric));
    }
    worst
}
