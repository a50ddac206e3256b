//! Python bindings: the dataset pipeline, both models, the metrics, and the
//! full experiment runner.
//!
//! Build with `cargo build --release -p buoycast-py`; the produced
//! `libbuoycast_py.so` imports as the module `buoycast_py` once renamed
//! (see `python/smoke_test.py` at the repository root).

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use buoycast::anfis::{AnfisConfig, AnfisError, AnfisModel};
use buoycast::features::{Split, SplitFractions, SupervisedDataset};
use buoycast::harness::{self, ExperimentConfig, HarnessError};
use buoycast::ingest::{self, CsvSchema, Regime};
use buoycast::metrics;
use buoycast::narx::{NarxConfig, NarxError, NarxModel};
use buoycast::trace::TrainTrace;

fn value_err(err: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn narx_err(err: NarxError) -> PyErr {
    match err {
        NarxError::NonFiniteLoss { .. } => PyRuntimeError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn anfis_err(err: AnfisError) -> PyErr {
    match err {
        AnfisError::NonFiniteLoss { .. }
        | AnfisError::AllRulesSilent { .. }
        | AnfisError::Numerical(_) => PyRuntimeError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn harness_err(err: HarnessError) -> PyErr {
    if err.is_numerical() {
        PyRuntimeError::new_err(err.to_string())
    } else {
        PyValueError::new_err(err.to_string())
    }
}

/// Deterministic synthetic buoy observations as canonical CSV text.
#[pyfunction]
#[pyo3(signature = (seed, n, regime = "mixed"))]
fn synthetic_csv(seed: u64, n: usize, regime: &str) -> PyResult<String> {
    let regime: Regime = regime.parse().map_err(value_err)?;
    let series = ingest::generate_synthetic(seed, n, regime).map_err(value_err)?;
    Ok(ingest::serialize_csv(&series))
}

/// Mean squared error between two equal-length series.
#[pyfunction]
fn mse(expected: Vec<f64>, predicted: Vec<f64>) -> PyResult<f64> {
    metrics::mse(&expected, &predicted).map_err(value_err)
}

/// Pearson regression R between two equal-length series.
#[pyfunction]
fn regression_r(expected: Vec<f64>, predicted: Vec<f64>) -> PyResult<f64> {
    metrics::regression_r(&expected, &predicted).map_err(value_err)
}

/// Run the full experiment described by a config JSON document, write its
/// artifacts, and return the comparison report as JSON.
#[pyfunction]
fn run_experiment(config_json: &str) -> PyResult<String> {
    let config = ExperimentConfig::from_json(config_json).map_err(harness_err)?;
    let report = harness::run_experiment(&config).map_err(harness_err)?;
    Ok(report.to_json())
}

/// Supervised dataset: feature rows, split labels, and the train-fitted
/// scaler, built from observation CSV text.
#[pyclass(name = "Dataset")]
struct PyDataset {
    inner: SupervisedDataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    #[pyo3(signature = (csv_text, cadence_seconds = 10800, min_segment_len = 5,
                        fractions = (0.7, 0.15, 0.15), shuffle_seed = None))]
    fn from_csv(
        csv_text: &str,
        cadence_seconds: i64,
        min_segment_len: usize,
        fractions: (f64, f64, f64),
        shuffle_seed: Option<u64>,
    ) -> PyResult<Self> {
        let parsed = ingest::parse_csv(csv_text, &CsvSchema::default(), cadence_seconds)
            .map_err(value_err)?;
        let segmentation = ingest::validate_cadence(&parsed.series, min_segment_len);
        let rows = buoycast::features::build_rows(&segmentation.segments);
        let fractions = SplitFractions {
            train: fractions.0,
            validation: fractions.1,
            test: fractions.2,
        };
        let inner = SupervisedDataset::build(rows, fractions, shuffle_seed).map_err(value_err)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// (train, validation, test) row counts.
    fn split_counts(&self) -> (usize, usize, usize) {
        self.inner.split_counts()
    }

    /// Hex hash of the split assignment.
    fn split_hash(&self) -> String {
        format!("{:016x}", self.inner.split_assignment_hash())
    }

    /// Inspection CSV with one line per feature row plus its split.
    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __repr__(&self) -> String {
        let (train, validation, test) = self.inner.split_counts();
        format!(
            "Dataset(rows={}, train={train}, validation={validation}, test={test})",
            self.inner.len()
        )
    }
}

fn metrics_dict<'py>(
    py: Python<'py>,
    sections: Vec<(Split, metrics::EvalMetrics)>,
) -> PyResult<Bound<'py, PyDict>> {
    let dict = PyDict::new(py);
    for (split, m) in sections {
        let entry = PyDict::new(py);
        entry.set_item("mse", m.mse)?;
        entry.set_item("r", m.r)?;
        entry.set_item("n", m.n)?;
        dict.set_item(split.name(), entry)?;
    }
    Ok(dict)
}

fn trace_rows(trace: &TrainTrace) -> Vec<(usize, f64, f64)> {
    trace
        .epochs
        .iter()
        .map(|e| (e.epoch, e.train_mse, e.validation_mse))
        .collect()
}

/// Trained NARX network.
#[pyclass(name = "NarxModel")]
struct PyNarxModel {
    inner: NarxModel,
    trace: Option<TrainTrace>,
}

#[pymethods]
impl PyNarxModel {
    /// Initialize and train on a dataset; returns the best-validation model.
    #[staticmethod]
    #[pyo3(signature = (dataset, hidden_neurons = 50, exogenous_delay = 2,
                        autoregressive_delay = 2, max_epochs = 2000, patience = 25,
                        step_size = 1e-2, rng_seed = 1))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        dataset: &PyDataset,
        hidden_neurons: usize,
        exogenous_delay: usize,
        autoregressive_delay: usize,
        max_epochs: usize,
        patience: usize,
        step_size: f64,
        rng_seed: u64,
    ) -> PyResult<Self> {
        let config = NarxConfig {
            hidden_neurons,
            exogenous_delay,
            autoregressive_delay,
            max_epochs,
            patience,
            step_size,
            rng_seed,
            ..NarxConfig::default()
        };
        let init = NarxModel::init(config).map_err(narx_err)?;
        let (inner, trace) = init.train(&dataset.inner).map_err(narx_err)?;
        Ok(Self {
            inner,
            trace: Some(trace),
        })
    }

    /// Per-split {"mse", "r", "n"} over the rows this model can predict.
    fn evaluate<'py>(&self, py: Python<'py>, dataset: &PyDataset) -> PyResult<Bound<'py, PyDict>> {
        let sections = self
            .inner
            .evaluate(dataset.inner.rows(), dataset.inner.labels())
            .map_err(narx_err)?;
        metrics_dict(py, sections)
    }

    /// (row_index, split, expected_ms, predicted_ms) per predictable row.
    fn predict(&self, dataset: &PyDataset) -> PyResult<Vec<(usize, String, f64, f64)>> {
        let predictions = self
            .inner
            .predict_rows(dataset.inner.rows(), dataset.inner.labels())
            .map_err(narx_err)?;
        Ok(predictions
            .iter()
            .map(|p| {
                (
                    p.row_index,
                    p.split.name().to_string(),
                    p.expected_ms,
                    p.predicted_ms,
                )
            })
            .collect())
    }

    /// (epoch, train_mse, validation_mse) rows recorded during training.
    fn trace(&self) -> Vec<(usize, f64, f64)> {
        self.trace.as_ref().map(trace_rows).unwrap_or_default()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: NarxModel::from_json(text).map_err(narx_err)?,
            trace: None,
        })
    }
}

/// Trained Sugeno ANFIS.
#[pyclass(name = "AnfisModel")]
struct PyAnfisModel {
    inner: AnfisModel,
    trace: Option<TrainTrace>,
}

#[pymethods]
impl PyAnfisModel {
    /// Initialize and train on a dataset; returns the best-validation model.
    #[staticmethod]
    #[pyo3(signature = (dataset, mfs_per_input = 3, max_epochs = 5, patience = 10,
                        step_size = 0.01))]
    fn train(
        dataset: &PyDataset,
        mfs_per_input: usize,
        max_epochs: usize,
        patience: usize,
        step_size: f64,
    ) -> PyResult<Self> {
        let config = AnfisConfig {
            mfs_per_input,
            max_epochs,
            patience,
            step_size,
            ..AnfisConfig::default()
        };
        let init = AnfisModel::init(config, &dataset.inner).map_err(anfis_err)?;
        let (inner, trace) = init.train(&dataset.inner).map_err(anfis_err)?;
        Ok(Self {
            inner,
            trace: Some(trace),
        })
    }

    /// Per-split {"mse", "r", "n"}; `lag_depth` rows are skipped at every
    /// segment start so results align with delay-line models.
    #[pyo3(signature = (dataset, lag_depth = 0))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        dataset: &PyDataset,
        lag_depth: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let sections = self
            .inner
            .evaluate(dataset.inner.rows(), dataset.inner.labels(), lag_depth)
            .map_err(anfis_err)?;
        metrics_dict(py, sections)
    }

    /// (row_index, split, expected_ms, predicted_ms) per predictable row.
    #[pyo3(signature = (dataset, lag_depth = 0))]
    fn predict(
        &self,
        dataset: &PyDataset,
        lag_depth: usize,
    ) -> PyResult<Vec<(usize, String, f64, f64)>> {
        let predictions = self
            .inner
            .predict_rows(dataset.inner.rows(), dataset.inner.labels(), lag_depth)
            .map_err(anfis_err)?;
        Ok(predictions
            .iter()
            .map(|p| {
                (
                    p.row_index,
                    p.split.name().to_string(),
                    p.expected_ms,
                    p.predicted_ms,
                )
            })
            .collect())
    }

    /// (epoch, train_mse, validation_mse) rows recorded during training.
    fn trace(&self) -> Vec<(usize, f64, f64)> {
        self.trace.as_ref().map(trace_rows).unwrap_or_default()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: AnfisModel::from_json(text).map_err(anfis_err)?,
            trace: None,
        })
    }
}

#[pymodule]
fn buoycast_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(synthetic_csv, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(regression_r, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyNarxModel>()?;
    m.add_class::<PyAnfisModel>()?;
    Ok(())
}
