//! Python bindings: configuration, checkpoints, training, inference and
//! evaluation from the `snet` module.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use snet_core::checkpoint;
use snet_core::config::RunConfig;
use snet_core::extraction::Extractor as CoreExtractor;
use snet_core::metrics;
use snet_core::pipeline::{self, RunRecord};
use snet_core::synthesis::{self, SynthesisModel};
use snet_core::text::{self, RcExample};

fn py_err(e: snet_core::Error) -> PyErr {
    use snet_core::Error as E;
    match e {
        E::Io { .. } => PyOSError::new_err(e.to_string()),
        E::Divergence { .. } | E::Tensor(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Adapts an optional Python callable into a log sink. The first exception
/// it raises is kept and surfaced once the command returns.
struct Logger<'py> {
    callback: Option<Bound<'py, PyAny>>,
    failure: Option<PyErr>,
}

impl<'py> Logger<'py> {
    fn new(callback: Option<Bound<'py, PyAny>>) -> Self {
        Self { callback, failure: None }
    }

    fn line(&mut self, line: &str) {
        if let (Some(cb), None) = (&self.callback, &self.failure) {
            if let Err(e) = cb.call1((line,)) {
                self.failure = Some(e);
            }
        }
    }

    fn finish<T>(self, result: snet_core::Result<T>) -> PyResult<T> {
        let value = result.map_err(py_err)?;
        match self.failure {
            Some(e) => Err(e),
            None => Ok(value),
        }
    }
}

fn json_to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Run configuration. Keyword arguments override `text`, which uses the
/// same `key = value` lines as configuration files.
#[pyclass(name = "Config", module = "snet")]
struct Config {
    inner: RunConfig,
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (text = None, **overrides))]
    fn new(text: Option<&str>, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut inner = RunConfig::parse(text.unwrap_or("")).map_err(py_err)?;
        if let Some(kw) = overrides {
            for (k, v) in kw.iter() {
                let key: String = k.extract()?;
                let raw = if v.is_instance_of::<pyo3::types::PyBool>() {
                    v.extract::<bool>()?.to_string()
                } else if v.is_none() {
                    "none".to_string()
                } else {
                    v.str()?.to_string()
                };
                inner.set(&key, &raw).map_err(py_err)?;
            }
            inner.validate().map_err(py_err)?;
        }
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: RunConfig::load(path).map_err(py_err)?,
        })
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        let mut next = self.inner.clone();
        next.set(key, value).map_err(py_err)?;
        next.validate().map_err(py_err)?;
        self.inner = next;
        Ok(())
    }

    fn apply_ablation(&mut self, name: &str) -> PyResult<()> {
        self.inner.apply_ablation(name).map_err(py_err)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn r(&self) -> f64 {
        self.inner.r
    }

    #[getter]
    fn beam(&self) -> usize {
        self.inner.beam
    }

    #[getter]
    fn max_len(&self) -> usize {
        self.inner.max_len
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

fn question_example(query: &str, passages: Vec<String>) -> PyResult<RcExample> {
    let passages: Vec<(String, bool)> = passages.into_iter().map(|p| (p, false)).collect();
    RcExample::from_text(0, query, &passages, Vec::new()).map_err(py_err)
}

/// A trained evidence extractor (single model or rank-then-extract pair).
#[pyclass(name = "Extractor", module = "snet")]
struct Extractor {
    inner: CoreExtractor,
}

#[pymethods]
impl Extractor {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: checkpoint::load_extractor(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save_extractor(&self.inner, path).map_err(py_err)
    }

    /// Predicts the evidence span. Returns a dict with the passage index, the
    /// token span within it, the span text and the passage scores.
    fn predict<'py>(&self, py: Python<'py>, query: &str, passages: Vec<String>) -> PyResult<Bound<'py, PyDict>> {
        let ex = question_example(query, passages)?;
        let pred = self.inner.predict(&ex).map_err(py_err)?;
        let (_, table) = text::concat_passages(&ex);
        let (p, s, e) = text::project_span(&table, pred.span.0, pred.span.1);
        let out = PyDict::new(py);
        out.set_item("passage", p)?;
        out.set_item("start", s)?;
        out.set_item("end", e)?;
        out.set_item("span", ex.passages[p][s..=e].join(" "))?;
        out.set_item("passage_scores", pred.passage_scores)?;
        Ok(out)
    }
}

/// A trained answer synthesis model.
#[pyclass(name = "Synthesizer", module = "snet")]
struct Synthesizer {
    inner: SynthesisModel,
}

#[pymethods]
impl Synthesizer {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: checkpoint::load_synthesis(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save_synthesis(&self.inner, path).map_err(py_err)
    }

    /// Generates a post-processed answer from `passage` with the evidence at
    /// token positions `start..=end`.
    #[pyo3(signature = (question, passage, start, end, beam = synthesis::DEFAULT_BEAM, max_len = synthesis::DEFAULT_MAX_LEN))]
    fn generate(&self, question: &str, passage: &str, start: usize, end: usize, beam: usize, max_len: usize) -> PyResult<String> {
        let q = text::tokenize(question);
        let p = text::tokenize(passage);
        let g = synthesis::generate(&self.inner, &q, &p, (start, end), beam, max_len).map_err(py_err)?;
        Ok(g.answer.join(" "))
    }
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    text::tokenize(text)
}

#[pyfunction]
fn rouge_l(hypothesis: &str, references: Vec<String>) -> PyResult<f64> {
    let refs: Vec<Vec<String>> = references.iter().map(|r| text::tokenize(r)).collect();
    metrics::rouge_l(&text::tokenize(hypothesis), &refs).map_err(py_err)
}

/// Corpus BLEU-1 over `(hypothesis, references)` pairs.
#[pyfunction]
fn bleu_1(pairs: Vec<(String, Vec<String>)>) -> f64 {
    let tokenized: Vec<(Vec<String>, Vec<Vec<String>>)> = pairs
        .iter()
        .map(|(h, rs)| (text::tokenize(h), rs.iter().map(|r| text::tokenize(r)).collect()))
        .collect();
    metrics::bleu_1_corpus(&tokenized)
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

/// Post-processes whitespace-separated generated tokens against the span and
/// passage tokens.
#[pyfunction]
fn post_process(generated: &str, span: &str, passage: &str) -> String {
    synthesis::post_process(&words(generated), &words(span), &words(passage)).join(" ")
}

#[pyfunction]
fn gen_corpus(config: &Config, out: PathBuf) -> PyResult<usize> {
    pipeline::cmd_gen_corpus(&config.inner, &out).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (config, data, log = None))]
fn train_extract<'py>(config: &Config, data: PathBuf, log: Option<Bound<'py, PyAny>>) -> PyResult<Extractor> {
    let mut logger = Logger::new(log);
    let result = pipeline::cmd_train_extract(&config.inner, &data, &mut |l| logger.line(l));
    logger.finish(result).map(|inner| Extractor { inner })
}

#[pyfunction]
#[pyo3(signature = (config, data, ckpts = Vec::new(), part2 = false, log = None))]
fn train_synth<'py>(
    config: &Config,
    data: PathBuf,
    ckpts: Vec<PathBuf>,
    part2: bool,
    log: Option<Bound<'py, PyAny>>,
) -> PyResult<Synthesizer> {
    let mut logger = Logger::new(log);
    let result = pipeline::cmd_train_synth(&config.inner, &data, &ckpts, part2, &mut |l| logger.line(l));
    logger.finish(result).map(|inner| Synthesizer { inner })
}

/// Answers every question in `data`; returns the run records as dicts and
/// writes them as JSON lines when `out` is given.
#[pyfunction]
#[pyo3(signature = (config, data, ckpts, synth = None, out = None))]
fn run<'py>(
    py: Python<'py>,
    config: &Config,
    data: PathBuf,
    ckpts: Vec<PathBuf>,
    synth: Option<PathBuf>,
    out: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let records: Vec<RunRecord> = py
        .detach(|| pipeline::cmd_run(&config.inner, &data, &ckpts, synth.as_deref()))
        .map_err(py_err)?;
    if let Some(out) = out {
        pipeline::write_records(&records, &out).map_err(py_err)?;
    }
    json_to_py(py, &records)
}

/// Scores an answers file against `data`.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, answers: PathBuf, data: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let report = pipeline::cmd_eval(&answers, &data).map_err(py_err)?;
    json_to_py(py, &report)
}

#[pyfunction]
fn ensemble_select<'py>(py: Python<'py>, ckpts: Vec<PathBuf>, data: PathBuf) -> PyResult<Bound<'py, PyList>> {
    let kept = pipeline::cmd_ensemble_select(&ckpts, &data, &mut |_| {}).map_err(py_err)?;
    PyList::new(py, kept.iter().map(|p| p.display().to_string()))
}

/// Adds the classes and functions to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Config>()?;
    m.add_class::<Extractor>()?;
    m.add_class::<Synthesizer>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(rouge_l, m)?)?;
    m.add_function(wrap_pyfunction!(bleu_1, m)?)?;
    m.add_function(wrap_pyfunction!(post_process, m)?)?;
    m.add_function(wrap_pyfunction!(gen_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(train_extract, m)?)?;
    m.add_function(wrap_pyfunction!(train_synth, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(ensemble_select, m)?)?;
    Ok(())
}

#[pymodule]
fn snet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
