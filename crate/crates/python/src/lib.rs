//! Python bindings for the `tivac` crate.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use tivac::simulation::{self, ScenarioSpec, TrueCorrelation};
use tivac::{BandConfig, FitConfig, FittedModel, LongitudinalDataset, SubjectRecord};

create_exception!(tivac, TivacError, PyException);

type SubjectTuple = (String, Vec<f64>, Vec<(f64, f64)>);

fn err(e: tivac::TivacError) -> PyErr {
    TivacError::new_err(e.to_string())
}

/// Bivariate longitudinal data: per-subject times and outcome pairs plus one covariate row per subject.
#[pyclass(name = "Dataset", module = "tivac", frozen)]
pub struct PyDataset {
    inner: LongitudinalDataset,
}

#[pymethods]
impl PyDataset {
    /// `subjects` is a list of `(subject_id, times, [(y1, y2), ...])`.
    #[new]
    #[pyo3(signature = (subjects, covariates, covariate_names))]
    fn new(
        subjects: Vec<SubjectTuple>,
        covariates: Vec<Vec<f64>>,
        covariate_names: Vec<String>,
    ) -> PyResult<Self> {
        let subjects = subjects
            .into_iter()
            .map(|(subject_id, times, outcomes)| SubjectRecord {
                subject_id,
                times,
                outcomes: outcomes.into_iter().map(|(a, b)| [a, b]).collect(),
            })
            .collect();
        let inner = LongitudinalDataset::new(subjects, covariates, covariate_names).map_err(err)?;
        Ok(PyDataset { inner })
    }

    #[staticmethod]
    fn from_csv(outcomes: PathBuf, covariates: PathBuf) -> PyResult<Self> {
        let inner = tivac::load_csv(&outcomes, &covariates).map_err(err)?;
        Ok(PyDataset { inner })
    }

    fn write_csv(&self, outcomes: PathBuf, covariates: PathBuf) -> PyResult<()> {
        self.inner.write_csv(&outcomes, &covariates).map_err(err)
    }

    #[getter]
    fn n_subjects(&self) -> usize {
        self.inner.n_subjects()
    }

    #[getter]
    fn n_observations(&self) -> usize {
        self.inner.n_observations()
    }

    #[getter]
    fn covariate_names(&self) -> Vec<String> {
        self.inner.covariate_names().to_vec()
    }

    #[getter]
    fn covariates(&self) -> Vec<Vec<f64>> {
        self.inner.covariates().to_vec()
    }

    #[getter]
    fn time_range(&self) -> (f64, f64) {
        self.inner.time_range()
    }

    fn subjects(&self) -> Vec<SubjectTuple> {
        self.inner
            .subjects()
            .iter()
            .map(|s| (s.subject_id.clone(), s.times.clone(), s.outcomes.iter().map(|y| (y[0], y[1])).collect()))
            .collect()
    }

    /// Subtracts group means of both outcomes, groups given by a covariate column.
    fn center_by_group(&self, group_column: usize) -> PyResult<Self> {
        let inner = tivac::center_by_group(&self.inner, group_column).map_err(err)?;
        Ok(PyDataset { inner })
    }

    /// Maps each outcome to normal scores.
    fn quantile_transform(&self) -> PyResult<Self> {
        let inner = tivac::quantile_transform(&self.inner).map_err(err)?;
        Ok(PyDataset { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n_subjects={}, n_observations={}, covariates={:?})",
            self.inner.n_subjects(),
            self.inner.n_observations(),
            self.inner.covariate_names()
        )
    }
}

/// A fitted TiVAC model.
#[pyclass(name = "Model", module = "tivac", frozen)]
pub struct PyModel {
    inner: FittedModel,
}

#[pymethods]
impl PyModel {
    #[getter]
    fn covariate_names(&self) -> Vec<String> {
        self.inner.covariate_names.clone()
    }

    #[getter]
    fn lambdas(&self) -> Vec<f64> {
        self.inner.lambdas_hat.clone()
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.theta_hat.as_slice().to_vec()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.report.converged
    }

    #[getter]
    fn variances(&self) -> (f64, f64) {
        (self.inner.variances.sigma1_sq, self.inner.variances.sigma2_sq)
    }

    fn default_grid(&self, points: usize) -> Vec<f64> {
        self.inner.default_grid(points)
    }

    fn coefficient_curve(&self, k: usize, grid: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.coefficient_curve(k, &grid).map_err(err)
    }

    fn eta_curve(&self, x: Vec<f64>, grid: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.eta_curve(&x, &grid).map_err(err)
    }

    /// Correlation `rho(t, x)` at each time in `grid`.
    fn correlation_surface(&self, x: Vec<f64>, grid: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.correlation_surface(&x, &grid).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: FittedModel::from_json(text).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            inner: FittedModel::load(&path).map_err(err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Model(covariates={:?}, lambdas={:?})", self.inner.covariate_names, self.inner.lambdas_hat)
    }
}

/// Fits by cross-validation over `lambda_grid`, or with fixed `lambdas` when given.
#[pyfunction]
#[pyo3(signature = (data, *, seed=0, knots=None, order=4, difference_order=2, lambda_grid=None, lambdas=None, folds=10))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    data: &PyDataset,
    seed: u64,
    knots: Option<usize>,
    order: usize,
    difference_order: usize,
    lambda_grid: Option<Vec<f64>>,
    lambdas: Option<Vec<f64>>,
    folds: usize,
) -> PyResult<PyModel> {
    let default = FitConfig::default();
    let config = FitConfig {
        interior_knots: knots.or(default.interior_knots),
        order,
        difference_order,
        lambda_grid: lambda_grid.unwrap_or(default.lambda_grid),
        cv_folds: folds,
        newton: default.newton,
        seed,
    };
    let data = &data.inner;
    let inner = py
        .detach(|| match &lambdas {
            Some(l) => tivac::model::fit_with_lambdas(data, &config, l),
            None => tivac::fit(data, &config),
        })
        .map_err(err)?;
    Ok(PyModel { inner })
}

/// Simultaneous confidence band for one coefficient function.
#[pyclass(name = "Band", module = "tivac", frozen, get_all)]
pub struct PyBand {
    covariate: usize,
    covariate_name: String,
    grid: Vec<f64>,
    estimate: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    critical_value: f64,
    alpha: f64,
    dropped_replicates: usize,
    significant_intervals: Vec<(f64, f64)>,
}

#[pymethods]
impl PyBand {
    fn covers_zero(&self) -> bool {
        self.lower.iter().zip(&self.upper).all(|(l, u)| *l <= 0.0 && 0.0 <= *u)
    }

    fn __repr__(&self) -> String {
        format!(
            "Band(covariate={:?}, critical_value={:.4}, significant_intervals={:?})",
            self.covariate_name, self.critical_value, self.significant_intervals
        )
    }
}

/// Nested-bootstrap simultaneous bands, one per covariate.
#[pyfunction]
#[pyo3(signature = (data, model, *, outer=100, inner=20, alpha=0.05, grid=None, seed=0))]
#[allow(clippy::too_many_arguments)]
fn bootstrap_bands(
    py: Python<'_>,
    data: &PyDataset,
    model: &PyModel,
    outer: usize,
    inner: usize,
    alpha: f64,
    grid: Option<Vec<f64>>,
    seed: u64,
) -> PyResult<Vec<PyBand>> {
    let config = BandConfig {
        outer_replicates: outer,
        inner_replicates: inner,
        alpha,
        grid,
        seed,
        ..BandConfig::default()
    };
    let (data, model) = (&data.inner, &model.inner);
    let bands = py.detach(|| tivac::bootstrap_scb(data, model, &config)).map_err(err)?;
    Ok(bands
        .into_iter()
        .map(|b| PyBand {
            significant_intervals: tivac::significant_intervals(&b),
            covariate: b.covariate,
            covariate_name: b.covariate_name,
            grid: b.grid,
            estimate: b.estimate,
            lower: b.lower,
            upper: b.upper,
            critical_value: b.critical_value,
            alpha: b.alpha,
            dropped_replicates: b.dropped_replicates,
        })
        .collect())
}

/// A simulation scenario.
#[pyclass(name = "Scenario", module = "tivac", frozen)]
pub struct PyScenario {
    inner: ScenarioSpec,
    truth: TrueCorrelation,
}

#[pymethods]
impl PyScenario {
    /// Parses one scenario object or an array of them.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Vec<PyScenario>> {
        let specs = ScenarioSpec::from_json(text).map_err(err)?;
        Ok(specs
            .into_iter()
            .map(|inner| PyScenario {
                truth: inner.truth(),
                inner,
            })
            .collect())
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn replications(&self) -> usize {
        self.inner.replications
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn t_max(&self) -> usize {
        self.inner.t_max
    }

    fn generate(&self, replication: usize) -> PyResult<PyDataset> {
        let generated = simulation::generate(&self.inner, replication).map_err(err)?;
        Ok(PyDataset { inner: generated.data })
    }

    /// Noise-free true correlation at time `t` for covariate value `x`.
    fn true_rho(&self, t: f64, x: f64) -> f64 {
        self.truth.rho(t, x)
    }

    fn __repr__(&self) -> String {
        format!("Scenario(name={:?}, n={}, t_max={})", self.inner.name, self.inner.n, self.inner.t_max)
    }
}

#[pyfunction]
fn rho_of_eta(eta: f64) -> f64 {
    tivac::rho_of_eta(eta).value()
}

#[pyfunction]
fn eta_of_rho(rho: f64) -> PyResult<f64> {
    tivac::eta_of_rho(rho).map_err(err)
}

/// Root-mean-square difference of two equally long sequences.
#[pyfunction]
fn rmse(estimate: Vec<f64>, truth: Vec<f64>) -> f64 {
    simulation::rmse(&estimate, &truth)
}

#[pymodule(name = "tivac")]
fn tivac_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TivacError", m.py().get_type::<TivacError>())?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyBand>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_bands, m)?)?;
    m.add_function(wrap_pyfunction!(rho_of_eta, m)?)?;
    m.add_function(wrap_pyfunction!(eta_of_rho, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
