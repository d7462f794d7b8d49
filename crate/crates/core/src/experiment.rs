//! Config-driven experiments: data source, filters, preprocessing,
//! featurization and cross-validation for a list of classifiers, with all
//! artifacts written to one output directory.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::forest::ForestParams;
use crate::classifiers::{fit, ClassifierSpec, Family, FitWarning};
use crate::data::{load_dataset, AgeGroup, DataError, Dataset, PostureLabel, Variant};
use crate::evaluation::{cross_validate, kfold_split, ClassificationReport};
use crate::features::{
    build_feature_matrix, feature_importance, select_recurrent, FeatureError, FeatureMatrix,
    FeatureSpec, MatSelection, RecurrentSelector,
};
use crate::preprocess::{preprocess_pipeline, OutlierPolicy, PreprocessConfig};
use crate::seed;
use crate::synth::{self, GeneratorConfig};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("stage `{stage}` failed: {message}")]
    Stage {
        stage: &'static str,
        message: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("matrix has no specs")]
    EmptyMatrix,
}

impl ExperimentError {
    fn stage(stage: &'static str) -> impl FnOnce(String) -> Self {
        move |message| ExperimentError::Stage { stage, message }
    }
}

fn stage<T, E: std::fmt::Display>(
    name: &'static str,
    r: Result<T, E>,
) -> Result<T, ExperimentError> {
    r.map_err(|e| ExperimentError::stage(name)(e.to_string()))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Where records come from: a CSV file or the seeded generator. Generator
/// fields left out take the variant's defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Path(PathBuf),
    Synth(serde_json::Map<String, serde_json::Value>),
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synth(serde_json::Map::new())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeSelection {
    Young,
    Senior,
    #[default]
    Both,
}

impl AgeSelection {
    pub fn keeps(self, age: AgeGroup) -> bool {
        match self {
            AgeSelection::Both => true,
            AgeSelection::Young => age == AgeGroup::Young,
            AgeSelection::Senior => age == AgeGroup::Senior,
        }
    }
}

impl std::str::FromStr for AgeSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "young" => Ok(Self::Young),
            "senior" => Ok(Self::Senior),
            "both" => Ok(Self::Both),
            _ => Err(format!("unknown age group `{s}` (young|senior|both)")),
        }
    }
}

fn default_k() -> usize {
    10
}

fn default_true() -> bool {
    true
}

fn default_seed() -> u64 {
    42
}

fn default_classifiers() -> Vec<ClassifierSpec> {
    Family::ALL
        .iter()
        .map(|&f| ClassifierSpec::new(f, 0))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub dataset: DatasetSource,
    pub variant: Variant,
    #[serde(default = "default_true")]
    pub normalized: bool,
    #[serde(default)]
    pub outlier_policy: OutlierPolicy,
    #[serde(default)]
    pub mats: MatSelection,
    #[serde(default)]
    pub recurrent: RecurrentSelector,
    /// Labels to keep, in report order; all of the variant's labels when absent.
    #[serde(default)]
    pub class_subset: Option<Vec<PostureLabel>>,
    #[serde(default)]
    pub age_group: AgeSelection,
    /// Feature groups; `mats` above overrides `features.mats`.
    #[serde(default)]
    pub features: FeatureSpec,
    #[serde(default = "default_classifiers")]
    pub classifiers: Vec<ClassifierSpec>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_true")]
    pub stratified: bool,
    #[serde(default)]
    pub group_aware: bool,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Participants dropped right after loading.
    #[serde(default)]
    pub exclude_participants: Vec<String>,
    #[serde(default = "default_true")]
    pub feature_importance: bool,
}

fn default_name() -> String {
    "experiment".into()
}

impl ExperimentSpec {
    pub fn new(name: impl Into<String>, variant: Variant) -> Self {
        let mut spec: ExperimentSpec =
            serde_json::from_value(serde_json::json!({ "variant": variant }))
                .expect("defaults deserialize");
        spec.name = name.into();
        spec
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Spec(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }

    /// Labels kept by the class-subset stage, in report order.
    pub fn classes(&self) -> Vec<PostureLabel> {
        self.class_subset
            .clone()
            .unwrap_or_else(|| self.variant.labels())
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Spec(m));
        if self.variant == Variant::Controlled {
            if self.mats != MatSelection::Seat {
                return bad("controlled experiments use the seat mat only".into());
            }
            if self.recurrent != RecurrentSelector::Full {
                return bad("controlled experiments have no recurrent elements".into());
            }
        }
        let allowed = self.variant.labels();
        let classes = self.classes();
        if let Some(l) = classes.iter().find(|l| !allowed.contains(l)) {
            return bad(format!(
                "label `{l}` does not occur in {} data",
                self.variant.as_str()
            ));
        }
        let mut uniq = classes.clone();
        uniq.sort();
        uniq.dedup();
        if uniq.len() != classes.len() {
            return bad("class_subset repeats a label".into());
        }
        if classes.len() < 2 {
            return bad("class_subset needs at least two labels".into());
        }
        if self.classifiers.is_empty() {
            return bad("no classifiers listed".into());
        }
        if self.k < 2 {
            return bad(format!("k = {} (need at least 2)", self.k));
        }
        for c in &self.classifiers {
            c.hyper
                .validate()
                .map_err(|e| ExperimentError::Spec(e.to_string()))?;
        }
        self.outlier_policy
            .validate()
            .map_err(|e| ExperimentError::Spec(e.to_string()))?;
        Ok(())
    }

    pub fn feature_spec(&self) -> FeatureSpec {
        FeatureSpec {
            mats: self.mats,
            ..self.features.clone()
        }
    }
}

/// Loads the CSV or runs the generator for `variant`.
pub fn load_source(source: &DatasetSource, variant: Variant) -> Result<Dataset, ExperimentError> {
    match source {
        DatasetSource::Path(p) => {
            let ds = load_dataset(p)?;
            if ds.variant != variant && !ds.is_empty() {
                return Err(ExperimentError::Spec(format!(
                    "{} holds {} data, spec says {}",
                    p.display(),
                    ds.variant.as_str(),
                    variant.as_str()
                )));
            }
            Ok(Dataset { variant, ..ds })
        }
        DatasetSource::Synth(overrides) => {
            let text = serde_json::Value::Object(overrides.clone()).to_string();
            let cfg = stage(
                "synth",
                GeneratorConfig::from_json_with_defaults(&text, variant),
            )?;
            stage("synth", synth::generate(variant, &cfg))
        }
    }
}

/// Rows left after each stage, for auditing filters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCounts {
    pub loaded: usize,
    pub after_filters: usize,
    pub after_preprocess: usize,
    pub after_class_subset: usize,
    pub after_recurrent: usize,
}

/// Runs every stage up to featurization.
///
/// Stage order: load, age and participant filters, preprocessing, class
/// subset, recurrent selection, features. Preprocessing precedes the class
/// subset so a still baseline exists even when `still` is not a target.
pub fn build_experiment_matrix(
    spec: &ExperimentSpec,
) -> Result<(FeatureMatrix, StageCounts), ExperimentError> {
    spec.validate()?;
    let ds = load_source(&spec.dataset, spec.variant)?;
    let loaded = ds.len();
    let ds = ds.filter(|r| {
        spec.age_group.keeps(r.age_group) && !spec.exclude_participants.contains(&r.participant_id)
    });
    let after_filters = ds.len();
    if ds.is_empty() {
        return Err(ExperimentError::stage("filter")(
            "no rows left after age/participant filters".into(),
        ));
    }
    let cfg = PreprocessConfig {
        policy: spec.outlier_policy,
        normalize: spec.normalized,
        baseline_source: None,
    };
    let ds = stage("preprocess", preprocess_pipeline(&ds, &cfg))?;
    let after_preprocess = ds.len();
    let classes = spec.classes();
    let ds = ds.filter(|r| classes.contains(&r.posture));
    let after_class_subset = ds.len();
    let ds = stage("recurrent", select_recurrent(&ds, spec.recurrent))?;
    let after_recurrent = ds.len();
    let fm = stage("featurize", build_feature_matrix(&ds, &spec.feature_spec()))?;
    Ok((
        fm,
        StageCounts {
            loaded,
            after_filters,
            after_preprocess,
            after_class_subset,
            after_recurrent,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierResult {
    pub family: Family,
    pub spec: ClassifierSpec,
    pub accuracy: f64,
    pub mean_fold_accuracy: f64,
    pub sd_fold_accuracy: f64,
    pub fold_accuracies: Vec<f64>,
    pub report: ClassificationReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<(usize, FitWarning)>,
    pub model_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub tool_version: String,
    pub spec: ExperimentSpec,
    pub stage_counts: StageCounts,
    pub class_counts: BTreeMap<PostureLabel, usize>,
    pub feature_names: Vec<String>,
    pub fold_sizes: Vec<usize>,
    pub classifiers: Vec<ClassifierResult>,
    pub feature_importance: Vec<(String, f64)>,
    /// Wall-clock seconds per stage; kept out of result.json so reruns stay
    /// byte-identical.
    #[serde(skip)]
    pub timing: Vec<(String, f64)>,
}

impl ExperimentResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes") + "\n"
    }

    pub fn report_text(&self) -> String {
        let mut s = format!(
            "experiment: {}\nvariant: {}  recurrent: {:?}  mats: {:?}  normalized: {}\nrows: {}  folds: {}\n",
            self.spec.name,
            self.spec.variant.as_str(),
            self.spec.recurrent,
            self.spec.mats,
            self.spec.normalized,
            self.stage_counts.after_recurrent,
            self.spec.k,
        );
        for c in &self.classifiers {
            s.push_str(&format!(
                "\n== {} ==\naccuracy {:.4} (folds {:.4} +/- {:.4})\n\n",
                c.family.display_name(),
                c.accuracy,
                c.mean_fold_accuracy,
                c.sd_fold_accuracy
            ));
            s.push_str(&c.report.to_text());
        }
        if !self.feature_importance.is_empty() {
            s.push_str("\n== feature importance (top 10) ==\n");
            for (name, v) in self.feature_importance.iter().take(10) {
                s.push_str(&format!("{name:>16} {v:.4}\n"));
            }
        }
        s
    }

    /// Long format: `classifier,true,predicted,count`.
    pub fn confusion_csv(&self) -> String {
        let mut s = String::from("classifier,true,predicted,count\n");
        for c in &self.classifiers {
            for (t, row) in c.report.classes.iter().zip(&c.report.confusion) {
                for (p, count) in c.report.classes.iter().zip(row) {
                    s.push_str(&format!("{},{},{},{}\n", c.family.as_str(), t, p, count));
                }
            }
        }
        s
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), ExperimentError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(contents).map_err(io_err(path))
}

/// Runs `spec` and, when `out_dir` is given, writes `result.json`,
/// `report.txt`, `confusion.csv`, `plot.csv` (when CoM features exist) and
/// one `model_<family>.json` per classifier fit on all rows.
pub fn run_experiment(
    spec: &ExperimentSpec,
    out_dir: Option<&Path>,
) -> Result<ExperimentResult, ExperimentError> {
    let mut timing = vec![];
    let t0 = Instant::now();
    let (fm, stage_counts) = build_experiment_matrix(spec)?;
    timing.push(("prepare".to_string(), t0.elapsed().as_secs_f64()));

    let plan = stage(
        "folds",
        kfold_split(
            fm.labels(),
            Some(fm.groups()),
            spec.k,
            spec.stratified,
            spec.group_aware,
            seed::derive(spec.seed, &[seed::hash_str("folds")]),
        ),
    )?;

    let mut used_names: BTreeMap<Family, usize> = BTreeMap::new();
    let mut classifiers = Vec::with_capacity(spec.classifiers.len());
    let mut models = Vec::with_capacity(spec.classifiers.len());
    for (i, c) in spec.classifiers.iter().enumerate() {
        let t = Instant::now();
        let c = c.with_seed(seed::derive(spec.seed, &[i as u64, c.seed]));
        let cv = stage("cross_validate", cross_validate(&fm, &c, &plan))?;
        let model = stage("fit", fit(&c, &fm))?;
        let n = used_names.entry(c.family()).or_default();
        let model_file = if *n == 0 {
            format!("model_{}.json", c.family().as_str())
        } else {
            format!("model_{}_{}.json", c.family().as_str(), *n)
        };
        *n += 1;
        timing.push((
            format!("{}_{}", i, c.family().as_str()),
            t.elapsed().as_secs_f64(),
        ));
        models.push((model_file.clone(), model));
        classifiers.push(ClassifierResult {
            family: c.family(),
            spec: c,
            accuracy: cv.accuracy,
            mean_fold_accuracy: cv.mean_accuracy,
            sd_fold_accuracy: cv.sd_accuracy,
            fold_accuracies: cv.fold_accuracies,
            report: cv.report,
            warnings: cv.warnings,
            model_file,
        });
    }

    let importance = if spec.feature_importance {
        let t = Instant::now();
        let ranked = stage(
            "feature_importance",
            feature_importance(
                &fm,
                &ForestParams::default(),
                seed::derive(spec.seed, &[seed::hash_str("importance")]),
            ),
        )?;
        timing.push(("feature_importance".to_string(), t.elapsed().as_secs_f64()));
        ranked
    } else {
        vec![]
    };

    let mut class_counts = BTreeMap::new();
    for &l in fm.labels() {
        *class_counts.entry(l).or_insert(0) += 1;
    }
    let result = ExperimentResult {
        tool_version: TOOL_VERSION.to_string(),
        spec: spec.clone(),
        stage_counts,
        class_counts,
        feature_names: fm.names().to_vec(),
        fold_sizes: plan.fold_sizes(),
        classifiers,
        feature_importance: importance,
        timing,
    };

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_file(&dir.join("result.json"), result.to_json().as_bytes())?;
        write_file(&dir.join("report.txt"), result.report_text().as_bytes())?;
        write_file(
            &dir.join("confusion.csv"),
            result.confusion_csv().as_bytes(),
        )?;
        if fm.column_index("seat_com_row").is_some() && fm.column_index("seat_com_col").is_some() {
            emit_posture_plot(&fm, &dir.join("plot.csv"))
                .map_err(|e| ExperimentError::stage("plot")(e.to_string()))?;
        }
        for (file, model) in &models {
            stage("save_model", model.save(dir.join(file)))?;
        }
    }
    Ok(result)
}

/// `class,com_row,com_col` per sample from the seat center-of-mass columns.
pub fn posture_plot_csv(fm: &FeatureMatrix) -> Result<String, FeatureError> {
    let col = |name: &str| {
        fm.column_index(name)
            .ok_or_else(|| FeatureError::MissingFeature(name.into()))
    };
    let (r, c) = (col("seat_com_row")?, col("seat_com_col")?);
    let mut s = String::from("class,com_row,com_col\n");
    for (row, label) in fm.rows().zip(fm.labels()) {
        s.push_str(&format!("{},{},{}\n", label, row[r], row[c]));
    }
    Ok(s)
}

pub fn emit_posture_plot(fm: &FeatureMatrix, out: &Path) -> Result<usize, FeatureError> {
    let csv = posture_plot_csv(fm)?;
    fs::write(out, csv).map_err(DataError::from)?;
    Ok(fm.n_rows())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub experiment: String,
    pub family: Family,
    pub accuracy: f64,
    /// Accuracy in whole percent, as shown in the text table.
    pub percent: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFailure {
    pub experiment: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSummary {
    pub cells: Vec<MatrixCell>,
    pub failures: Vec<MatrixFailure>,
}

pub fn percent(accuracy: f64) -> u32 {
    (accuracy * 100.0).round() as u32
}

impl MatrixSummary {
    /// One row per experiment, one column per classifier family.
    pub fn to_text(&self) -> String {
        let families: Vec<Family> = Family::ALL
            .into_iter()
            .filter(|f| self.cells.iter().any(|c| c.family == *f))
            .collect();
        let mut rows: Vec<&str> = vec![];
        for c in &self.cells {
            if !rows.contains(&c.experiment.as_str()) {
                rows.push(&c.experiment);
            }
        }
        let width = rows.iter().map(|r| r.len()).chain([10]).max().unwrap_or(10);
        let mut s = format!("{:<width$}", "experiment");
        for f in &families {
            s.push_str(&format!(" {:>5}", f.display_name()));
        }
        s.push('\n');
        for r in rows {
            s.push_str(&format!("{r:<width$}"));
            for f in &families {
                match self
                    .cells
                    .iter()
                    .find(|c| c.experiment == r && c.family == *f)
                {
                    Some(c) => s.push_str(&format!(" {:>4}%", c.percent)),
                    None => s.push_str(&format!(" {:>5}", "-")),
                }
            }
            s.push('\n');
        }
        for f in &self.failures {
            s.push_str(&format!("FAILED {}: {}\n", f.experiment, f.error));
        }
        s
    }
}

/// Runs each spec (in parallel) into `out_dir/<name>/` and writes
/// `summary.txt` and `summary.json`. Failures are recorded per spec.
pub fn run_matrix(
    specs: &[ExperimentSpec],
    out_dir: Option<&Path>,
) -> Result<MatrixSummary, ExperimentError> {
    if specs.is_empty() {
        return Err(ExperimentError::EmptyMatrix);
    }
    let outcomes: Vec<Result<ExperimentResult, ExperimentError>> = specs
        .par_iter()
        .map(|s| run_experiment(s, out_dir.map(|d| d.join(&s.name)).as_deref()))
        .collect();
    let mut summary = MatrixSummary {
        cells: vec![],
        failures: vec![],
    };
    for (spec, outcome) in specs.iter().zip(outcomes) {
        match outcome {
            Ok(r) => summary
                .cells
                .extend(r.classifiers.iter().map(|c| MatrixCell {
                    experiment: spec.name.clone(),
                    family: c.family,
                    accuracy: c.accuracy,
                    percent: percent(c.accuracy),
                })),
            Err(e) => summary.failures.push(MatrixFailure {
                experiment: spec.name.clone(),
                error: e.to_string(),
            }),
        }
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_file(&dir.join("summary.txt"), summary.to_text().as_bytes())?;
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
        write_file(&dir.join("summary.json"), json.as_bytes())?;
    }
    Ok(summary)
}

/// Loads every `*.json` spec in `dir`, sorted by file name.
pub fn load_matrix_dir(dir: &Path) -> Result<Vec<ExperimentSpec>, ExperimentError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths.iter().map(ExperimentSpec::load).collect()
}
