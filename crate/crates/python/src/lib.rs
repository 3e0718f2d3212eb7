//! Python bindings: `import temsa`.
//!
//! Structured results (metrics, test results, records, reports) come back as
//! plain dicts and lists.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;
use temsa_core::corpus::Sentiment;
use temsa_core::detect::{
    detect_dataset, object_count_histogram, CacheWriter, DetectionIndex, FixtureDetector, ObjectNameList,
    SourceFilter, DEFAULT_COCO_THRESHOLD, DEFAULT_FIXTURE_THRESHOLD, DEFAULT_VG_THRESHOLD, SOURCE_COCO,
    SOURCE_FIXTURE, SOURCE_VG,
};
use temsa_core::eval::{self, Averaging, Pairing};
use temsa_core::expctl;
use temsa_core::tems::{self, LengthPolicy, TokenizeScheme};

create_exception!(temsa, TemsaError, PyException);

fn err(e: temsa_core::Error) -> PyErr {
    TemsaError::new_err(e.to_string())
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| TemsaError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn sentiments(labels: &[String]) -> PyResult<Vec<Sentiment>> {
    labels.iter().map(|l| l.parse().map_err(err)).collect()
}

/// Flat experiment configuration; keys mirror the TOML config file.
#[pyclass(name = "ExperimentConfig", module = "temsa", skip_from_py_object)]
#[derive(Clone)]
struct PyExperimentConfig {
    inner: expctl::ExperimentConfig,
}

#[pymethods]
impl PyExperimentConfig {
    #[new]
    #[pyo3(signature = (manifest, **overrides))]
    fn new(manifest: PathBuf, overrides: Option<BTreeMap<String, String>>) -> PyResult<Self> {
        let mut inner = expctl::ExperimentConfig {
            manifest,
            ..Default::default()
        };
        for (k, v) in overrides.unwrap_or_default() {
            inner.set(&k, &v).map_err(err)?;
        }
        Ok(PyExperimentConfig { inner })
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let inner = expctl::ExperimentConfig::from_file(&path).map_err(err)?;
        Ok(PyExperimentConfig { inner })
    }

    /// Sets one key from its string form, e.g. `cfg.set("epochs", "3")`.
    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(err)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(err)
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml_string().map_err(err)
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner)
    }

    #[getter]
    fn run_name(&self) -> String {
        self.inner.run_name()
    }

    #[getter]
    fn run_dir(&self) -> PathBuf {
        expctl::run_dir(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("ExperimentConfig({})", self.inner.run_name())
    }
}

#[pyfunction]
fn clean_text(raw: &str) -> String {
    tems::clean_text(raw)
}

/// Cleans and whitespace-tokenizes a caption.
#[pyfunction]
fn tokenize(raw: &str) -> Vec<String> {
    tems::tokenize(&tems::clean_text(raw), &TokenizeScheme::Whitespace).into()
}

/// Caption tokens (truncated to `text_max`) followed by at most
/// `max_objects` normalized object names.
#[pyfunction]
#[pyo3(signature = (text, object_names, text_max = 55, max_objects = 20))]
fn build_tems(text: &str, object_names: Vec<String>, text_max: usize, max_objects: usize) -> PyResult<Vec<String>> {
    let policy = LengthPolicy::new(text_max, max_objects).map_err(err)?;
    let toks = tems::tokenize(&tems::clean_text(text), &TokenizeScheme::Whitespace);
    Ok(tems::build_tems(&toks, &ObjectNameList::new(object_names), &policy).combined.into())
}

/// Accuracy, precision, recall and F1 of label strings.
#[pyfunction]
#[pyo3(signature = (predictions, golds, averaging = "macro"))]
fn evaluate_predictions(
    py: Python<'_>,
    predictions: Vec<String>,
    golds: Vec<String>,
    averaging: &str,
) -> PyResult<Py<PyAny>> {
    let avg: Averaging = averaging.parse().map_err(err)?;
    let cm = eval::confusion(&sentiments(&predictions)?, &sentiments(&golds)?).map_err(err)?;
    to_py(py, &eval::metrics(&cm, avg).map_err(err)?)
}

/// Two-sided paired Wilcoxon signed-rank test of `x - y`.
#[pyfunction]
#[pyo3(signature = (x, y, alpha = 0.05))]
fn wilcoxon(py: Python<'_>, x: Vec<f64>, y: Vec<f64>, alpha: f64) -> PyResult<Py<PyAny>> {
    to_py(py, &eval::wilcoxon_signed_rank(&x, &y, alpha).map_err(err)?)
}

/// Prepares, trains and evaluates one experiment; returns the result record.
#[pyfunction]
fn run_experiment(py: Python<'_>, config: &PyExperimentConfig) -> PyResult<Py<PyAny>> {
    let cfg = config.inner.clone();
    let rec = py.detach(move || expctl::run_experiment(&cfg)).map_err(err)?;
    to_py(py, &rec)
}

#[pyfunction]
fn load_record(py: Python<'_>, path: PathBuf) -> PyResult<Py<PyAny>> {
    to_py(py, &expctl::load(&path).map_err(err)?)
}

/// Compares persisted result records; optionally writes SVG plots.
#[pyfunction]
#[pyo3(signature = (paths, plots_dir = None))]
fn compare_records(py: Python<'_>, paths: Vec<PathBuf>, plots_dir: Option<PathBuf>) -> PyResult<Py<PyAny>> {
    let records = paths.iter().map(|p| expctl::load(p)).collect::<Result<Vec<_>, _>>().map_err(err)?;
    let report = eval::compare_experiments(&records, &Pairing::Auto).map_err(err)?;
    if let Some(dir) = plots_dir {
        eval::emit_plots(&report, &dir).map_err(err)?;
    }
    to_py(py, &report)
}

/// Writes a small labelled corpus with grid images; returns the manifest path.
#[pyfunction]
#[pyo3(signature = (dir, samples = 100, seed = 0))]
fn write_synthetic_corpus(dir: PathBuf, samples: usize, seed: u64) -> PyResult<PathBuf> {
    let opts = temsa_core::synth::SynthOptions::new(samples, seed);
    Ok(temsa_core::synth::write_synthetic_corpus(&dir, &opts).map_err(err)?.manifest)
}

/// Runs the grid-cell fixture detector over a manifest's images.
#[pyfunction]
#[pyo3(signature = (manifest, cache, threshold = DEFAULT_FIXTURE_THRESHOLD))]
fn detect_fixture(manifest: PathBuf, cache: PathBuf, threshold: f64) -> PyResult<(usize, usize, usize)> {
    let fmt = temsa_core::corpus::ManifestFormat::from_path(&manifest);
    let d = temsa_core::corpus::load_manifest(&manifest, fmt, "fixture").map_err(err)?;
    let root = manifest.parent().map(PathBuf::from).unwrap_or_default();
    let mut w = CacheWriter::open(&cache).map_err(err)?;
    let s = detect_dataset(&d, &root, &mut FixtureDetector::new(threshold), &mut w).map_err(err)?;
    w.flush().map_err(err)?;
    Ok((s.written, s.cached, s.without_image))
}

/// Per-sample object counts of a detection cache: `(counts, percentages)`.
#[pyfunction]
fn object_histogram(cache: PathBuf) -> PyResult<(Vec<usize>, Vec<f64>)> {
    let thresholds = BTreeMap::from([
        (SOURCE_COCO.to_string(), DEFAULT_COCO_THRESHOLD),
        (SOURCE_VG.to_string(), DEFAULT_VG_THRESHOLD),
        (SOURCE_FIXTURE.to_string(), DEFAULT_FIXTURE_THRESHOLD),
    ]);
    let idx = DetectionIndex::load(&cache, &thresholds).map_err(err)?;
    let h = object_count_histogram(&idx, &SourceFilter::All);
    Ok((h.counts, h.percentages))
}

#[pymodule]
fn temsa(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TemsaError", m.py().get_type::<TemsaError>())?;
    m.add_class::<PyExperimentConfig>()?;
    m.add_function(wrap_pyfunction!(clean_text, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(build_tems, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_predictions, m)?)?;
    m.add_function(wrap_pyfunction!(wilcoxon, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(load_record, m)?)?;
    m.add_function(wrap_pyfunction!(compare_records, m)?)?;
    m.add_function(wrap_pyfunction!(write_synthetic_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(detect_fixture, m)?)?;
    m.add_function(wrap_pyfunction!(object_histogram, m)?)?;
    Ok(())
}

/// Registers the module with an embedded interpreter (used by the Rust tests).
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    temsa(m)
}
