//! Python bindings: `import hkq`.

use std::path::PathBuf;

use hkq_core::estimators::{make_training_set, MomentGrid, DEFAULT_DRAWS, DEFAULT_TRAINING_RECORDS};
use hkq_core::eval::{run_grid, ConstantEstimator, Estimator, EvalGrid, ModelEstimator};
use hkq_core::{EnvelopeBlock, Error, EstimatorKind, FeatureVector, HkParams, Model, PredictOptions, Prediction};
use hkq_core::TrainConfig;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    if e.is_numeric() {
        PyArithmeticError::new_err(e.to_string())
    } else if e.is_io() {
        PyOSError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

/// HK parameters (epsilon, sigma, alpha).
#[pyclass(name = "HkParams", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyHkParams(HkParams);

#[pymethods]
impl PyHkParams {
    #[new]
    fn new(epsilon: f64, sigma: f64, alpha: f64) -> PyResult<Self> {
        HkParams::new(epsilon, sigma, alpha).map(PyHkParams).map_err(to_py)
    }

    /// Parameters with unit diffuse power for the regression targets.
    #[staticmethod]
    fn from_targets(log10_alpha: f64, k: f64) -> PyResult<Self> {
        hkq_core::params_from_targets(log10_alpha, k).map(PyHkParams).map_err(to_py)
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.0.epsilon
    }
    #[getter]
    fn sigma(&self) -> f64 {
        self.0.sigma
    }
    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha
    }
    #[getter]
    fn log10_alpha(&self) -> f64 {
        self.0.log10_alpha()
    }
    #[getter]
    fn k(&self) -> f64 {
        self.0.k()
    }
    #[getter]
    fn in_training_box(&self) -> bool {
        self.0.in_training_box()
    }

    fn __repr__(&self) -> String {
        format!("HkParams(epsilon={}, sigma={}, alpha={})", self.0.epsilon, self.0.sigma, self.0.alpha)
    }
}

/// The eight envelope statistics.
#[pyclass(name = "Features", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyFeatures(FeatureVector);

#[pymethods]
impl PyFeatures {
    #[new]
    fn new(values: Vec<f64>) -> PyResult<Self> {
        FeatureVector::from_slice(&values).map(PyFeatures).map_err(to_py)
    }

    fn to_list(&self) -> Vec<f64> {
        self.0.to_array().to_vec()
    }

    #[staticmethod]
    fn names() -> Vec<&'static str> {
        hkq_core::features::FEATURE_NAMES.to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Features({:?})", self.0.to_array())
    }
}

#[pyclass(name = "Prediction", frozen, skip_from_py_object)]
struct PyPrediction(Prediction);

#[pymethods]
impl PyPrediction {
    #[getter]
    fn mean_log10_alpha(&self) -> f64 {
        self.0.mean_log10_alpha
    }
    #[getter]
    fn mean_k(&self) -> f64 {
        self.0.mean_k
    }
    #[getter]
    fn std_log10_alpha(&self) -> f64 {
        self.0.std_log10_alpha
    }
    #[getter]
    fn std_k(&self) -> f64 {
        self.0.std_k
    }
    #[getter]
    fn n_draws(&self) -> usize {
        self.0.n_draws
    }
    /// Per-draw `(log10 alpha, k)` pairs.
    #[getter]
    fn draws(&self) -> Vec<(f64, f64)> {
        self.0.draws.iter().map(|d| (d[0], d[1])).collect()
    }

    fn __repr__(&self) -> String {
        let p = &self.0;
        format!(
            "Prediction(log10_alpha={:.4} ± {:.4}, k={:.4} ± {:.4}, n_draws={})",
            p.mean_log10_alpha, p.std_log10_alpha, p.mean_k, p.std_k, p.n_draws
        )
    }
}

fn parse_kind(kind: &str) -> PyResult<EstimatorKind> {
    kind.parse().map_err(to_py)
}

/// A trained ANN or BNN for one sample size.
#[pyclass(name = "Model", frozen, skip_from_py_object)]
struct PyModel(Model);

#[pymethods]
impl PyModel {
    /// Builds the synthetic training set and fits a network. Returns
    /// `(model, losses)` where `losses[0]` is the loss before the first epoch.
    #[staticmethod]
    #[pyo3(signature = (kind, n_s, records = DEFAULT_TRAINING_RECORDS, seed = 0, epochs = None, batch_size = None, learning_rate = None, kl_weight = None))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        py: Python<'_>,
        kind: &str,
        n_s: usize,
        records: usize,
        seed: u64,
        epochs: Option<usize>,
        batch_size: Option<usize>,
        learning_rate: Option<f64>,
        kl_weight: Option<f64>,
    ) -> PyResult<(Self, Vec<f64>)> {
        let kind = parse_kind(kind)?;
        let mut cfg = TrainConfig { seed, kl_weight, ..TrainConfig::default() };
        if let Some(e) = epochs {
            cfg.epochs = e;
        }
        if let Some(b) = batch_size {
            cfg.batch_size = b;
        }
        if let Some(lr) = learning_rate {
            cfg.learning_rate = lr;
        }
        let (model, trace) = py
            .detach(|| {
                cfg.validate()?;
                let set = make_training_set(n_s, records, seed)?;
                Model::fit(kind, &set, &cfg)
            })
            .map_err(to_py)?;
        let mut losses = vec![trace.initial];
        losses.extend(trace.epochs);
        Ok((PyModel(model), losses))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Model::load(&path).map(PyModel).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(&path).map_err(to_py)
    }

    fn to_bytes(&self) -> PyResult<Vec<u8>> {
        self.0.to_bytes().map_err(to_py)
    }

    #[getter]
    fn kind(&self) -> String {
        self.0.kind.to_string()
    }

    #[getter]
    fn n_s(&self) -> usize {
        self.0.n_s
    }

    /// Predicts from a `Features` object or directly from envelope samples.
    #[pyo3(signature = (data, n_draws = DEFAULT_DRAWS, seed = 0, clamp = false, force = false))]
    fn predict(
        &self,
        py: Python<'_>,
        data: &Bound<'_, PyAny>,
        n_draws: usize,
        seed: u64,
        clamp: bool,
        force: bool,
    ) -> PyResult<PyPrediction> {
        let features = match data.cast::<PyFeatures>() {
            Ok(f) => f.get().0,
            Err(_) => {
                let samples: Vec<f64> = data.extract()?;
                self.0.check_sample_size(samples.len(), force).map_err(to_py)?;
                let block = EnvelopeBlock::new(samples).map_err(to_py)?;
                hkq_core::compute_features(&block).map_err(to_py)?
            }
        };
        let opts = PredictOptions { n_draws, seed, clamp };
        py.detach(|| self.0.predict(&features, &opts)).map(PyPrediction).map_err(to_py)
    }

    /// Scores the model on a uniform grid over the training box; returns the
    /// aggregate metrics as a dict.
    #[pyo3(signature = (alpha_points = 31, k_points = 11, reps = 100, seed = 0, n_draws = DEFAULT_DRAWS, clamp = false))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        alpha_points: usize,
        k_points: usize,
        reps: usize,
        seed: u64,
        n_draws: usize,
        clamp: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let est = ModelEstimator { model: &self.0, options: PredictOptions { n_draws, seed, clamp } };
        let grid = EvalGrid::uniform(alpha_points, k_points, reps, self.0.n_s);
        evaluate_dict(py, &est, &grid, seed)
    }
}

fn evaluate_dict<'py>(py: Python<'py>, est: &dyn Estimator, grid: &EvalGrid, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let r = py.detach(|| run_grid(est, grid, seed, true)).map_err(to_py)?;
    let d = PyDict::new(py);
    let a = &r.aggregate;
    d.set_item("estimator", r.estimator)?;
    d.set_item("rrmse_alpha", a.rrmse_alpha)?;
    d.set_item("mae_alpha", a.mae_alpha)?;
    d.set_item("rrmse_k", a.rrmse_k)?;
    d.set_item("mae_k", a.mae_k)?;
    d.set_item("mean_std_alpha", a.mean_std_alpha)?;
    d.set_item("mean_std_k", a.mean_std_k)?;
    Ok(d)
}

/// Moment-matching lookup baseline.
#[pyclass(name = "MomentGrid", frozen, skip_from_py_object)]
struct PyMomentGrid(MomentGrid);

#[pymethods]
impl PyMomentGrid {
    #[staticmethod]
    #[pyo3(signature = (samples_per_cell, seed = 0, alpha_points = None, k_points = None))]
    fn build(
        py: Python<'_>,
        samples_per_cell: usize,
        seed: u64,
        alpha_points: Option<usize>,
        k_points: Option<usize>,
    ) -> PyResult<Self> {
        let (na, nk) = hkq_core::estimators::LOOKUP_SHAPE;
        py.detach(|| MomentGrid::build_sized(alpha_points.unwrap_or(na), k_points.unwrap_or(nk), samples_per_cell, seed))
            .map(PyMomentGrid)
            .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        MomentGrid::load(&path).map(PyMomentGrid).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(&path).map_err(to_py)
    }

    /// Returns `(prediction, extrapolated)`.
    fn lookup(&self, features: &PyFeatures) -> PyResult<(PyPrediction, bool)> {
        let m = self.0.lookup(&features.0).map_err(to_py)?;
        Ok((PyPrediction(m.prediction), m.extrapolated))
    }
}

/// `n` i.i.d. HK envelope samples.
#[pyfunction]
fn sample_hk(py: Python<'_>, params: &PyHkParams, n: usize, seed: u64) -> PyResult<Vec<f64>> {
    let p = params.0;
    py.detach(|| hkq_core::sample_hk(&p, n, seed)).map(EnvelopeBlock::into_samples).map_err(to_py)
}

#[pyfunction]
fn compute_features(samples: Vec<f64>) -> PyResult<PyFeatures> {
    let block = EnvelopeBlock::new(samples).map_err(to_py)?;
    hkq_core::compute_features(&block).map(PyFeatures).map_err(to_py)
}

/// HK density at envelope amplitude `a`.
#[pyfunction]
fn hk_pdf(a: f64, params: &PyHkParams) -> PyResult<f64> {
    hkq_core::hk_pdf(a, &params.0).map_err(to_py)
}

/// Grid metrics of a fixed `(log10 alpha, k)` guess; a reference floor for real estimators.
#[pyfunction]
#[pyo3(signature = (log10_alpha, k, n_s, alpha_points = 31, k_points = 11, reps = 100, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn evaluate_constant<'py>(
    py: Python<'py>,
    log10_alpha: f64,
    k: f64,
    n_s: usize,
    alpha_points: usize,
    k_points: usize,
    reps: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let grid = EvalGrid::uniform(alpha_points, k_points, reps, n_s);
    evaluate_dict(py, &ConstantEstimator([log10_alpha, k]), &grid, seed)
}

#[pymodule]
fn hkq(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHkParams>()?;
    m.add_class::<PyFeatures>()?;
    m.add_class::<PyPrediction>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyMomentGrid>()?;
    m.add_function(wrap_pyfunction!(sample_hk, m)?)?;
    m.add_function(wrap_pyfunction!(compute_features, m)?)?;
    m.add_function(wrap_pyfunction!(hk_pdf, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_constant, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
