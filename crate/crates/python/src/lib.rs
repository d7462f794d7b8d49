//! Python bindings for the sitgrid posture pipeline.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sitgrid::classifiers::{self, ClassifierSpec, Family};
use sitgrid::data::{self, PostureLabel, PressureFrame, Variant};
use sitgrid::evaluation;
use sitgrid::experiment::{self, ExperimentSpec};
use sitgrid::features::{self, MatSelection, RecurrentSelector};
use sitgrid::preprocess::{self, OutlierPolicy, PreprocessConfig};
use sitgrid::synth::{self, GeneratorConfig};
use sitgrid::Mat;

create_exception!(pysitgrid, SitgridError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    SitgridError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> PyResult<T> {
    s.parse().map_err(SitgridError::new_err)
}

fn frame(values: Vec<f64>) -> PyResult<PressureFrame> {
    let values: [f64; 32] = values.try_into().map_err(|v: Vec<f64>| {
        SitgridError::new_err(format!("expected 32 sensor values, got {}", v.len()))
    })?;
    PressureFrame::new(Mat::Seat, values).map_err(err)
}

fn labels(names: &[String]) -> PyResult<Vec<PostureLabel>> {
    names.iter().map(|l| parse(l)).collect()
}

fn label_strings(labels: &[PostureLabel]) -> Vec<String> {
    labels.iter().map(|l| l.as_str().to_owned()).collect()
}

/// 8×8 grid (row-major, 1-based rows map to index 0) for 32 sensor values.
#[pyfunction]
fn map_to_grid(values: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    Ok(data::map_to_grid(&frame(values)?)
        .iter()
        .map(|r| r.to_vec())
        .collect())
}

/// `(row, col, zero_mass)`; coordinates are 1-based.
#[pyfunction]
fn center_of_mass(values: Vec<f64>) -> PyResult<(f64, f64, bool)> {
    let c = features::center_of_mass(&frame(values)?);
    Ok((c.row, c.col, c.zero_mass))
}

/// `[top-left, top-right, bottom-left, bottom-right]`.
#[pyfunction]
fn quadrant_sums(values: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(features::quadrant_sums(&frame(values)?).to_vec())
}

/// `[top, bottom, left, right]`.
#[pyfunction]
fn edge_sums(values: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(features::edge_sums(&frame(values)?).to_vec())
}

#[pyclass(name = "Dataset", module = "pysitgrid")]
struct PyDataset {
    inner: data::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Seeded synthetic dataset; `config` is a JSON object of generator overrides.
    #[staticmethod]
    #[pyo3(signature = (variant, seed=None, config=None))]
    fn generate(variant: &str, seed: Option<u64>, config: Option<&str>) -> PyResult<Self> {
        let variant: Variant = parse(variant)?;
        let mut cfg = match config {
            Some(text) => GeneratorConfig::from_json_with_defaults(text, variant).map_err(err)?,
            None => GeneratorConfig::default_for(variant),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        Ok(Self {
            inner: synth::generate(variant, &cfg).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: data::load_dataset(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        data::save_dataset(&self.inner, path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({}, {} records)",
            self.inner.variant.as_str(),
            self.inner.len()
        )
    }

    #[getter]
    fn variant(&self) -> &'static str {
        self.inner.variant.as_str()
    }

    fn labels(&self) -> Vec<String> {
        self.inner
            .records
            .iter()
            .map(|r| r.posture.as_str().to_owned())
            .collect()
    }

    fn participants(&self) -> Vec<String> {
        self.inner.participants()
    }

    /// Sensor values of record `i`: 32 seat values, then 32 back values if present.
    fn sensors(&self, i: usize) -> PyResult<Vec<f64>> {
        self.inner
            .records
            .get(i)
            .map(|r| r.sensor_values())
            .ok_or_else(|| SitgridError::new_err(format!("record {i} out of range")))
    }

    #[pyo3(signature = (normalize=true, sigma=None, cap=None))]
    fn preprocess(&self, normalize: bool, sigma: Option<f64>, cap: Option<f64>) -> PyResult<Self> {
        let policy = match (sigma, cap) {
            (Some(_), Some(_)) => return Err(SitgridError::new_err("pass sigma or cap, not both")),
            (Some(k), None) => OutlierPolicy::SigmaMultiple { k },
            (None, Some(cap)) => OutlierPolicy::AbsoluteCap { cap },
            (None, None) => OutlierPolicy::default(),
        };
        let cfg = PreprocessConfig {
            policy,
            normalize,
            baseline_source: None,
        };
        Ok(Self {
            inner: preprocess::preprocess_pipeline(&self.inner, &cfg).map_err(err)?,
        })
    }

    fn select_recurrent(&self, selector: &str) -> PyResult<Self> {
        let s: RecurrentSelector = parse(selector)?;
        Ok(Self {
            inner: features::select_recurrent(&self.inner, s).map_err(err)?,
        })
    }

    fn filter_labels(&self, keep: Vec<String>) -> PyResult<Self> {
        let keep = labels(&keep)?;
        Ok(Self {
            inner: self.inner.filter(|r| keep.contains(&r.posture)),
        })
    }

    #[pyo3(signature = (groups="raw,com,quadrants,edges", mats="seat"))]
    fn featurize(&self, groups: &str, mats: &str) -> PyResult<PyFeatureMatrix> {
        let mats: MatSelection = parse(mats)?;
        let spec = features::FeatureSpec::from_groups(groups, mats).map_err(err)?;
        Ok(PyFeatureMatrix {
            inner: features::build_feature_matrix(&self.inner, &spec).map_err(err)?,
        })
    }
}

#[pyclass(name = "FeatureMatrix", module = "pysitgrid")]
struct PyFeatureMatrix {
    inner: features::FeatureMatrix,
}

#[pymethods]
impl PyFeatureMatrix {
    #[new]
    fn new(names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<String>) -> PyResult<Self> {
        let labels = self::labels(&labels)?;
        Ok(Self {
            inner: features::FeatureMatrix::from_rows(names, &rows, labels).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: features::FeatureMatrix::load(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.n_rows()
    }

    fn __repr__(&self) -> String {
        format!(
            "FeatureMatrix({} x {})",
            self.inner.n_rows(),
            self.inner.n_cols()
        )
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.n_rows(), self.inner.n_cols())
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names().to_vec()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        label_strings(self.inner.labels())
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows().map(<[f64]>::to_vec).collect()
    }

    /// RF impurity-decrease ranking as `(name, score)` pairs.
    #[pyo3(signature = (seed=0))]
    fn feature_importance(&self, seed: u64) -> PyResult<Vec<(String, f64)>> {
        features::feature_importance(&self.inner, &classifiers::ForestParams::default(), seed)
            .map_err(err)
    }

    /// Writes `class,com_row,com_col` for every row.
    fn posture_plot(&self, path: PathBuf) -> PyResult<usize> {
        experiment::emit_posture_plot(&self.inner, &path).map_err(err)
    }
}

fn spec_for(family: &str, seed: u64, params: Option<&str>) -> PyResult<ClassifierSpec> {
    let family: Family = parse(family)?;
    let mut spec = match params {
        Some(text) => {
            let mut value: serde_json::Value = serde_json::from_str(text).map_err(err)?;
            let obj = value
                .as_object_mut()
                .ok_or_else(|| SitgridError::new_err("params must be a JSON object"))?;
            obj.insert("family".into(), family.as_str().into());
            serde_json::from_value(value).map_err(err)?
        }
        None => ClassifierSpec::new(family, seed),
    };
    spec.seed = seed;
    Ok(spec)
}

#[pyclass(name = "Model", module = "pysitgrid")]
struct PyModel {
    inner: classifiers::ClassifierModel,
}

#[pymethods]
impl PyModel {
    /// Fits `family` (rf, gnb, lr, svm, dnn); `params` is a JSON object of
    /// hyperparameter overrides.
    #[staticmethod]
    #[pyo3(signature = (features, family, seed=0, params=None))]
    fn fit(
        features: PyRef<'_, PyFeatureMatrix>,
        family: &str,
        seed: u64,
        params: Option<&str>,
    ) -> PyResult<Self> {
        let spec = spec_for(family, seed, params)?;
        Ok(Self {
            inner: classifiers::fit(&spec, &features.inner).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: classifiers::ClassifierModel::from_json(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: classifiers::ClassifierModel::load(path).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.inner.family().as_str()
    }

    #[getter]
    fn classes(&self) -> Vec<String> {
        label_strings(&self.inner.classes)
    }

    fn predict(&self, features: PyRef<'_, PyFeatureMatrix>) -> PyResult<Vec<String>> {
        Ok(label_strings(
            &self.inner.predict(&features.inner).map_err(err)?,
        ))
    }

    fn predict_proba(&self, features: PyRef<'_, PyFeatureMatrix>) -> PyResult<Vec<Vec<f64>>> {
        self.inner.predict_proba(&features.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model({}, classes={:?})",
            self.inner.family().as_str(),
            self.classes()
        )
    }
}

/// Fold id per row.
#[pyfunction]
#[pyo3(signature = (labels, k=10, stratified=true, seed=0))]
fn kfold_split(labels: Vec<String>, k: usize, stratified: bool, seed: u64) -> PyResult<Vec<usize>> {
    let labels = self::labels(&labels)?;
    Ok(
        evaluation::kfold_split(&labels, None, k, stratified, false, seed)
            .map_err(err)?
            .assignments,
    )
}

/// K-fold cross-validation; returns a dict with `accuracy`,
/// `fold_accuracies`, `predictions`, `report` (text) and `report_json`.
#[pyfunction]
#[pyo3(signature = (features, family, k=10, seed=0, stratified=true, group_aware=false, params=None))]
#[allow(clippy::too_many_arguments)]
fn cross_validate<'py>(
    py: Python<'py>,
    features: PyRef<'_, PyFeatureMatrix>,
    family: &str,
    k: usize,
    seed: u64,
    stratified: bool,
    group_aware: bool,
    params: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = spec_for(family, seed, params)?;
    let fm = &features.inner;
    let plan = evaluation::kfold_split(
        fm.labels(),
        Some(fm.groups()),
        k,
        stratified,
        group_aware,
        seed,
    )
    .map_err(err)?;
    let cv = evaluation::cross_validate(fm, &spec, &plan).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("accuracy", cv.accuracy)?;
    out.set_item("mean_fold_accuracy", cv.mean_accuracy)?;
    out.set_item("sd_fold_accuracy", cv.sd_accuracy)?;
    out.set_item("fold_accuracies", cv.fold_accuracies.clone())?;
    out.set_item("predictions", label_strings(&cv.predictions))?;
    out.set_item("report", cv.report.to_text())?;
    out.set_item(
        "report_json",
        serde_json::to_string(&cv.report).map_err(err)?,
    )?;
    Ok(out)
}

/// Max relative error between analytic and finite-difference gradients.
#[pyfunction]
#[pyo3(signature = (features, family, seed=0))]
fn gradient_check(features: PyRef<'_, PyFeatureMatrix>, family: &str, seed: u64) -> PyResult<f64> {
    classifiers::gradient_check(&spec_for(family, seed, None)?, &features.inner).map_err(err)
}

/// Runs an experiment spec given as JSON; returns the result JSON.
#[pyfunction]
#[pyo3(signature = (spec, out_dir=None))]
fn run_experiment(spec: &str, out_dir: Option<PathBuf>) -> PyResult<String> {
    let spec = ExperimentSpec::from_json(spec).map_err(err)?;
    Ok(experiment::run_experiment(&spec, out_dir.as_deref())
        .map_err(err)?
        .to_json())
}

#[pymodule]
fn pysitgrid(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SitgridError", m.py().get_type::<SitgridError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyFeatureMatrix>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(map_to_grid, m)?)?;
    m.add_function(wrap_pyfunction!(center_of_mass, m)?)?;
    m.add_function(wrap_pyfunction!(quadrant_sums, m)?)?;
    m.add_function(wrap_pyfunction!(edge_sums, m)?)?;
    m.add_function(wrap_pyfunction!(kfold_split, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_check, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
