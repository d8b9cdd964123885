//! Python bindings: `import eagle_calib`.
//!
//! Layer logits cross the boundary as `list[list[float]]` (one row per layer,
//! one column per score), dump records as plain dicts. Every library error
//! is raised as `eagle_calib.EagleError` with a message of the form
//! `"<kind>: <detail>"`.

use std::collections::BTreeMap;

use eagle_core::aggregation::{aggregated_distribution, default_k};
use eagle_core::dump::{load_dump, write_dump_path};
use eagle_core::harness::{self, MethodResult};
use eagle_core::metrics::{self, EvalRecord};
use eagle_core::toy;
use eagle_core::{
    AggregationConfig, CandidateScoreSet, Combine, Decision, DumpHeader, LayerLogits,
    LayerSelection, ScoreDumpRecord, Weights,
};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

create_exception!(eagle_calib, EagleError, PyException);

fn to_py(e: eagle_core::Error) -> PyErr {
    EagleError::new_err(format!("{}: {}", e.kind(), e))
}

trait OrRaise<T> {
    fn or_raise(self) -> PyResult<T>;
}

impl<T> OrRaise<T> for eagle_core::Result<T> {
    fn or_raise(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// An ordered set of integer scores and the token that emits each one.
#[pyclass(name = "ScoreSet", module = "eagle_calib", frozen, from_py_object)]
#[derive(Clone)]
struct PyScoreSet {
    inner: CandidateScoreSet,
}

#[pymethods]
impl PyScoreSet {
    #[new]
    fn new(scores: Vec<u32>, token_ids: Vec<u32>) -> PyResult<Self> {
        let inner = CandidateScoreSet::new(scores, token_ids).or_raise()?;
        Ok(Self { inner })
    }

    /// Scores `0..=max`, score `s` emitted by token `s`.
    #[staticmethod]
    fn digits(max: u32) -> PyResult<Self> {
        Ok(Self {
            inner: CandidateScoreSet::digits(max).or_raise()?,
        })
    }

    /// Parses `"lo-hi"`, e.g. `"0-9"`.
    #[staticmethod]
    fn parse(range: &str) -> PyResult<Self> {
        Ok(Self {
            inner: CandidateScoreSet::parse_range(range).or_raise()?,
        })
    }

    #[getter]
    fn scores(&self) -> Vec<u32> {
        self.inner.scores().to_vec()
    }

    #[getter]
    fn token_ids(&self) -> Vec<u32> {
        self.inner.token_ids().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("ScoreSet({})", self.inner)
    }
}

fn parse_combine(s: &str) -> PyResult<Combine> {
    match s {
        "logits" => Ok(Combine::Logits),
        "prob" => Ok(Combine::Probs),
        _ => Err(EagleError::new_err(format!(
            "invalid_selection: combine must be 'logits' or 'prob', got '{s}'"
        ))),
    }
}

fn parse_decision(s: &str) -> PyResult<Decision> {
    match s {
        "exp" => Ok(Decision::Expectation),
        "max" => Ok(Decision::MaxScore),
        _ => Err(EagleError::new_err(format!(
            "invalid_selection: decision must be 'exp' or 'max', got '{s}'"
        ))),
    }
}

/// Layer choice: `layers=(m, n)` wins over `k`; with neither, `k = ceil(L/4)`.
fn build_config(
    num_layers: usize,
    k: Option<usize>,
    layers: Option<(usize, usize)>,
    combine: &str,
    decision: &str,
    weights: Option<Vec<f64>>,
) -> PyResult<AggregationConfig> {
    let selection = match (layers, k) {
        (Some((start, end)), _) => LayerSelection::Range { start, end },
        (None, Some(k)) => LayerSelection::LastK(k),
        (None, None) => LayerSelection::LastK(default_k(num_layers)),
    };
    let mut config = AggregationConfig::eagle(1)
        .with_layers(selection)
        .with_combine(parse_combine(combine)?)
        .with_decision(parse_decision(decision)?);
    if let Some(w) = weights {
        config.weights = Weights::Explicit(w);
    }
    Ok(config)
}

/// Returns `(raw, normalized)` for one record's layer logits.
#[pyfunction]
#[pyo3(signature = (layer_logits, score_set, *, k=None, layers=None, combine="logits", decision="exp", weights=None))]
fn compute_confidence(
    layer_logits: Vec<Vec<f64>>,
    score_set: &PyScoreSet,
    k: Option<usize>,
    layers: Option<(usize, usize)>,
    combine: &str,
    decision: &str,
    weights: Option<Vec<f64>>,
) -> PyResult<(f64, f64)> {
    let logits = LayerLogits::new(layer_logits).or_raise()?;
    let config = build_config(logits.num_layers(), k, layers, combine, decision, weights)?;
    let c = eagle_core::compute_confidence(&logits, &config, &score_set.inner).or_raise()?;
    Ok((c.raw, c.normalized))
}

/// The aggregated distribution over the score set.
#[pyfunction]
#[pyo3(signature = (layer_logits, score_set, *, k=None, layers=None, combine="logits", weights=None))]
fn score_distribution(
    layer_logits: Vec<Vec<f64>>,
    score_set: &PyScoreSet,
    k: Option<usize>,
    layers: Option<(usize, usize)>,
    combine: &str,
    weights: Option<Vec<f64>>,
) -> PyResult<Vec<f64>> {
    let logits = LayerLogits::new(layer_logits).or_raise()?;
    let config = build_config(logits.num_layers(), k, layers, combine, "exp", weights)?;
    let dist = aggregated_distribution(&logits, &config, &score_set.inner).or_raise()?;
    Ok(dist.into_probs())
}

fn eval_records(confidences: &[f64], labels: &[bool]) -> PyResult<Vec<EvalRecord>> {
    if confidences.len() != labels.len() {
        return Err(EagleError::new_err(format!(
            "width_mismatch: {} confidences but {} labels",
            confidences.len(),
            labels.len()
        )));
    }
    confidences
        .iter()
        .zip(labels)
        .map(|(&c, &y)| EvalRecord::new(c, y))
        .collect::<eagle_core::Result<_>>()
        .or_raise()
}

/// Expected calibration error in `[0, 1]` over equal-width bins.
#[pyfunction]
#[pyo3(signature = (confidences, labels, bins=10))]
fn ece(confidences: Vec<f64>, labels: Vec<bool>, bins: usize) -> PyResult<f64> {
    metrics::ece(&eval_records(&confidences, &labels)?, bins).or_raise()
}

/// Area under the ROC curve of confidence against correctness, in `[0, 1]`.
#[pyfunction]
fn auroc(confidences: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    metrics::auroc(&eval_records(&confidences, &labels)?).or_raise()
}

/// One dict per bin: index, lower, upper, count, mean_confidence, mean_accuracy.
#[pyfunction]
#[pyo3(signature = (confidences, labels, bins=10))]
fn reliability_bins<'py>(
    py: Python<'py>,
    confidences: Vec<f64>,
    labels: Vec<bool>,
    bins: usize,
) -> PyResult<Bound<'py, PyList>> {
    let stats = metrics::reliability_bins(&eval_records(&confidences, &labels)?, bins).or_raise()?;
    let list = PyList::empty(py);
    for b in stats {
        let d = PyDict::new(py);
        d.set_item("index", b.index)?;
        d.set_item("lower", b.lower)?;
        d.set_item("upper", b.upper)?;
        d.set_item("count", b.count)?;
        d.set_item("mean_confidence", b.mean_confidence)?;
        d.set_item("mean_accuracy", b.mean_accuracy)?;
        list.append(d)?;
    }
    Ok(list)
}

fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (value.to_string(),))
}

fn py_to_json(value: &Bound<'_, PyAny>) -> PyResult<serde_json::Value> {
    let text: String = value.py().import("json")?.call_method1("dumps", (value,))?.extract()?;
    serde_json::from_str(&text)
        .map_err(|e| EagleError::new_err(format!("validation: meta is not valid JSON: {e}")))
}

fn header_dict<'py>(py: Python<'py>, header: &DumpHeader) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("schema_version", header.schema_version)?;
    d.set_item("num_layers", header.num_layers)?;
    d.set_item("score_set", PyScoreSet { inner: header.score_set.clone() })?;
    d.set_item("producer", &header.producer)?;
    Ok(d)
}

fn record_dict<'py>(py: Python<'py>, record: &ScoreDumpRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("id", &record.id)?;
    d.set_item("correct", record.correct)?;
    d.set_item("layer_logits", record.layer_logits.to_rows())?;
    d.set_item("answer_group", &record.answer_group)?;
    let meta = PyDict::new(py);
    for (key, value) in &record.meta {
        meta.set_item(key, json_to_py(py, value)?)?;
    }
    d.set_item("meta", meta)?;
    Ok(d)
}

fn record_from_dict(d: &Bound<'_, PyDict>) -> PyResult<ScoreDumpRecord> {
    let required = |key: &str| {
        d.get_item(key)?
            .ok_or_else(|| EagleError::new_err(format!("validation: record is missing '{key}'")))
    };
    let optional = |key: &str| -> PyResult<Option<Bound<'_, PyAny>>> {
        Ok(d.get_item(key)?.filter(|v| !v.is_none()))
    };
    let id: String = required("id")?.extract()?;
    let correct: Option<bool> = optional("correct")?.map(|v| v.extract()).transpose()?;
    let rows: Vec<Vec<f64>> = required("layer_logits")?.extract()?;
    let mut record = ScoreDumpRecord::new(id, correct, LayerLogits::new(rows).or_raise()?);
    record.answer_group = optional("answer_group")?.map(|v| v.extract()).transpose()?;
    if let Some(meta) = optional("meta")? {
        let meta = meta.cast_into::<PyDict>()?;
        let mut out = BTreeMap::new();
        for (k, v) in meta.iter() {
            out.insert(k.extract::<String>()?, py_to_json(&v)?);
        }
        record.meta = out;
    }
    Ok(record)
}

/// Reads a dump into `(header, records)`.
#[pyfunction]
fn read_dump<'py>(py: Python<'py>, path: &str) -> PyResult<(Bound<'py, PyDict>, Bound<'py, PyList>)> {
    let (header, records) = load_dump(path).or_raise()?;
    let list = PyList::empty(py);
    for r in &records {
        list.append(record_dict(py, r)?)?;
    }
    Ok((header_dict(py, &header)?, list))
}

/// Writes records (dicts as returned by `read_dump`) to a canonical dump.
#[pyfunction]
#[pyo3(signature = (path, num_layers, score_set, records, producer="eagle_calib"))]
fn write_dump(
    path: &str,
    num_layers: usize,
    score_set: &PyScoreSet,
    records: Vec<Bound<'_, PyDict>>,
    producer: &str,
) -> PyResult<()> {
    let header = DumpHeader::new(num_layers, score_set.inner.clone(), producer);
    let records = records
        .iter()
        .map(record_from_dict)
        .collect::<PyResult<Vec<_>>>()?;
    write_dump_path(&header, &records, path).or_raise()
}

/// Writes a planted-confidence dump; returns the number of records written.
#[pyfunction]
#[pyo3(signature = (path, n, *, seed=0, num_layers=8, scores="0-9", sigma=1.0, signal_layers=None, early="pure", early_sigma=None))]
#[allow(clippy::too_many_arguments)]
fn generate_planted(
    path: &str,
    n: usize,
    seed: u64,
    num_layers: usize,
    scores: &str,
    sigma: f64,
    signal_layers: Option<usize>,
    early: &str,
    early_sigma: Option<f64>,
) -> PyResult<usize> {
    let set = CandidateScoreSet::parse_range(scores).or_raise()?;
    let early = match early {
        "pure" => toy::EarlyLayers::PureNoise,
        "noisy" => toy::EarlyLayers::NoisySignal,
        _ => {
            return Err(EagleError::new_err(format!(
                "invalid_spec: early must be 'pure' or 'noisy', got '{early}'"
            )))
        }
    };
    let template = toy::PlantedRecordSpec::new(0.0, sigma, num_layers, set.clone())
        .with_signal_layers(signal_layers.unwrap_or(num_layers))
        .with_early_layers(early, early_sigma.unwrap_or(sigma));
    template.validate().or_raise()?;
    let specs = toy::sample_planted_specs(n, &template, seed);
    let records = toy::generate_planted_dataset(&specs, seed).or_raise()?;
    let header = DumpHeader::new(num_layers, set, format!("eagle_calib planted seed={seed}"));
    write_dump_path(&header, &records, path).or_raise()?;
    Ok(records.len())
}

/// A small deterministic random transformer exposing per-layer logits.
#[pyclass(name = "ToyTransformer", module = "eagle_calib", frozen)]
struct PyToyTransformer {
    inner: toy::ToyTransformer,
}

#[pymethods]
impl PyToyTransformer {
    #[new]
    #[pyo3(signature = (seed=0, *, vocab_size=32, model_dim=16, num_layers=6, ffn_dim=32))]
    fn new(seed: u64, vocab_size: usize, model_dim: usize, num_layers: usize, ffn_dim: usize) -> PyResult<Self> {
        let config = toy::ToyConfig {
            vocab_size,
            model_dim,
            num_layers,
            ffn_dim,
            seed,
        };
        Ok(Self {
            inner: toy::ToyTransformer::new(config).or_raise()?,
        })
    }

    #[getter]
    fn num_layers(&self) -> usize {
        self.inner.num_layers()
    }

    /// Full-vocabulary logits at the last position.
    fn final_logits(&self, tokens: Vec<usize>) -> PyResult<Vec<f64>> {
        self.inner.final_logits(&tokens).or_raise()
    }

    /// Score-token logits of every layer at the last position.
    fn layer_logits(&self, tokens: Vec<usize>, score_set: &PyScoreSet) -> PyResult<Vec<Vec<f64>>> {
        Ok(self
            .inner
            .forward_with_layers(&tokens, &score_set.inner)
            .or_raise()?
            .to_rows())
    }

    /// Writes `n` self-evaluation records to a dump; returns `n`.
    #[pyo3(signature = (path, n, score_set, *, seed=0))]
    fn write_dataset(&self, path: &str, n: usize, score_set: &PyScoreSet, seed: u64) -> PyResult<usize> {
        let records = toy::transformer_dataset(&self.inner, n, &score_set.inner, seed).or_raise()?;
        let header = DumpHeader::new(
            self.inner.num_layers(),
            score_set.inner.clone(),
            format!("eagle_calib transformer seed={seed} model_seed={}", self.inner.config().seed),
        );
        write_dump_path(&header, &records, path).or_raise()?;
        Ok(n)
    }
}

fn result_dict<'py>(py: Python<'py>, r: &MethodResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("method", &r.label)?;
    d.set_item("config", r.config.describe())?;
    d.set_item("ece", r.ece)?;
    d.set_item("auroc", r.auroc)?;
    d.set_item("count", r.count)?;
    Ok(d)
}

/// ECE and AUROC (both ×100) of one configuration on a labeled dump.
#[pyfunction]
#[pyo3(signature = (path, *, k=None, layers=None, combine="logits", decision="exp", bins=10))]
fn evaluate<'py>(
    py: Python<'py>,
    path: &str,
    k: Option<usize>,
    layers: Option<(usize, usize)>,
    combine: &str,
    decision: &str,
    bins: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let (header, records) = load_dump(path).or_raise()?;
    let config = build_config(header.num_layers, k, layers, combine, decision, None)?;
    let r = harness::evaluate(&records, &config, &header.score_set, bins).or_raise()?;
    result_dict(py, &r)
}

/// The six-way ablation; `k` defaults to `ceil(L/4)`.
#[pyfunction]
#[pyo3(signature = (path, *, k=None, bins=10))]
fn ablate<'py>(py: Python<'py>, path: &str, k: Option<usize>, bins: usize) -> PyResult<Bound<'py, PyList>> {
    let (header, records) = load_dump(path).or_raise()?;
    let k = k.unwrap_or_else(|| default_k(header.num_layers));
    let results = harness::ablate(&records, &header.score_set, k, bins).or_raise()?;
    let list = PyList::empty(py);
    for r in &results {
        list.append(result_dict(py, r)?)?;
    }
    Ok(list)
}

/// Every contiguous layer range as `(start, end, ece, auroc)`.
#[pyfunction]
#[pyo3(signature = (path, *, combine="logits", decision="exp", bins=10))]
fn sweep(path: &str, combine: &str, decision: &str, bins: usize) -> PyResult<Vec<(usize, usize, f64, f64)>> {
    let (header, records) = load_dump(path).or_raise()?;
    let grid = harness::sweep(
        &records,
        &header.score_set,
        parse_decision(decision)?,
        parse_combine(combine)?,
        bins,
    )
    .or_raise()?;
    Ok(grid.cells.iter().map(|c| (c.start, c.end, c.ece, c.auroc)).collect())
}

/// The ECE-minimizing last-n depth as `(k, ece)`.
#[pyfunction]
#[pyo3(signature = (path, *, bins=10))]
fn tune(path: &str, bins: usize) -> PyResult<(usize, f64)> {
    let (header, records) = load_dump(path).or_raise()?;
    let t = harness::tune_k(&records, &header.score_set, bins).or_raise()?;
    Ok((t.k, t.ece))
}

#[pymodule]
fn eagle_calib(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("EagleError", m.py().get_type::<EagleError>())?;
    m.add_class::<PyScoreSet>()?;
    m.add_class::<PyToyTransformer>()?;
    m.add_function(wrap_pyfunction!(compute_confidence, m)?)?;
    m.add_function(wrap_pyfunction!(score_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(ece, m)?)?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(reliability_bins, m)?)?;
    m.add_function(wrap_pyfunction!(read_dump, m)?)?;
    m.add_function(wrap_pyfunction!(write_dump, m)?)?;
    m.add_function(wrap_pyfunction!(generate_planted, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(ablate, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(tune, m)?)?;
    Ok(())
}
