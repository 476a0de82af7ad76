//! Python bindings: text normalisation, metrics, the aggregate, adapter
//! sizes, near-duplicate filtering and the pipeline stages.

use std::path::PathBuf;

use forge_cli::evaluate::EvaluateArgs;
use forge_cli::{BackendKind, CliError, Context, Outcome};
use forge_core::curate::{self, load_jsonl};
use forge_core::eval::{self, MetricReport, N_METRICS};
use forge_core::{lora, InstructionPair as CorePair, Label, TaskKind};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// An instruction/input/output triple with its task and provenance.
#[pyclass(name = "InstructionPair", module = "forge", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPair {
    inner: CorePair,
}

#[pymethods]
impl PyPair {
    #[staticmethod]
    fn from_json(line: &str) -> PyResult<Self> {
        serde_json::from_str(line).map(|inner| PyPair { inner }).map_err(value_err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(value_err)
    }

    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn task(&self) -> &'static str {
        self.inner.task.as_str()
    }

    #[getter]
    fn instruction(&self) -> &str {
        &self.inner.instruction
    }

    #[getter]
    fn input(&self) -> &str {
        &self.inner.input
    }

    #[getter]
    fn output(&self) -> &str {
        &self.inner.output
    }

    fn __repr__(&self) -> String {
        format!("InstructionPair(id={:?}, task={:?})", self.inner.id, self.inner.task.as_str())
    }
}

#[pyfunction]
fn clean_text(raw: &str) -> String {
    forge_core::clean_text(raw)
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    forge_core::tokenize(text)
}

/// Taxonomy label for a free-text answer, or None when nothing matches.
#[pyfunction]
fn normalize_label(free_text: &str) -> Option<&'static str> {
    match forge_core::normalize_label(free_text) {
        Label::Known(l) => Some(l.as_str()),
        Label::Unmapped => None,
    }
}

/// Sentence BLEU (0–100) of two raw strings after tokenisation.
#[pyfunction]
fn bleu(candidate: &str, reference: &str) -> PyResult<f64> {
    eval::bleu(&forge_core::tokenize(candidate), &forge_core::tokenize(reference)).map_err(value_err)
}

/// ROUGE-L F (0–100) of two raw strings after tokenisation.
#[pyfunction]
fn rouge_l(candidate: &str, reference: &str) -> PyResult<f64> {
    eval::rouge_l(&forge_core::tokenize(candidate), &forge_core::tokenize(reference)).map_err(value_err)
}

#[pyfunction]
fn perplexity(token_logprobs: Vec<f64>) -> PyResult<f64> {
    eval::perplexity(&token_logprobs).map_err(value_err)
}

/// Macro precision, recall and F1 (0–100) of free-text predictions against
/// gold taxonomy labels.
#[pyfunction]
fn macro_prf(predictions: Vec<String>, gold: Vec<String>) -> PyResult<(f64, f64, f64)> {
    let preds: Vec<Label> = predictions.iter().map(|p| forge_core::normalize_label(p)).collect();
    let gold = gold.iter().map(|g| g.parse()).collect::<Result<Vec<_>, _>>().map_err(value_err)?;
    let prf = eval::macro_prf(&preds, &gold).map_err(value_err)?;
    Ok((prf.precision, prf.recall, prf.f1))
}

/// Geometric mean of 18 positive values (perplexity already transformed).
#[pyfunction]
fn geometric_mean(values: Vec<f64>) -> PyResult<f64> {
    eval::geometric_mean(&values).map_err(value_err)
}

/// Aggregate of an 18-metric row whose perplexity column is raw.
#[pyfunction]
fn report_gm(values: Vec<f64>) -> PyResult<f64> {
    let row: [f64; N_METRICS] =
        values.try_into().map_err(|v: Vec<f64>| value_err(format!("expected {N_METRICS} values, got {}", v.len())))?;
    let report = MetricReport::from_values(row).map_err(value_err)?;
    Ok(report.gm.expect("complete rows always aggregate"))
}

#[pyfunction]
fn metric_names() -> Vec<&'static str> {
    eval::METRIC_NAMES.to_vec()
}

#[pyfunction]
#[pyo3(signature = (d_model, r, n_layers, n_targets = 4))]
fn lora_param_count(d_model: usize, r: usize, n_layers: usize, n_targets: usize) -> u64 {
    lora::lora_param_count(d_model, r, n_layers, n_targets)
}

#[pyfunction]
fn load_pairs(path: PathBuf) -> PyResult<Vec<PyPair>> {
    let pairs: Vec<CorePair> = load_jsonl(&path).map_err(value_err)?;
    Ok(pairs.into_iter().map(|inner| PyPair { inner }).collect())
}

/// Drop exact and near duplicates, keeping first occurrences.
#[pyfunction]
#[pyo3(signature = (pairs, threshold = 0.9))]
fn dedup(pairs: Vec<PyRef<'_, PyPair>>, threshold: f64) -> Vec<PyPair> {
    let pairs: Vec<CorePair> = pairs.iter().map(|p| p.inner.clone()).collect();
    curate::dedup(&pairs, threshold).into_iter().map(|inner| PyPair { inner }).collect()
}

/// Word-trigram Jaccard similarity of two raw strings.
#[pyfunction]
fn trigram_jaccard(a: &str, b: &str) -> f64 {
    curate::trigram_jaccard(&forge_core::tokenize(a), &forge_core::tokenize(b))
}

#[pyfunction]
fn task_kinds() -> Vec<&'static str> {
    TaskKind::ALL.iter().map(|t| t.as_str()).collect()
}

/// Run one `forge` stage and return "clean" or "partial"; hard failures
/// raise RuntimeError.
#[pyfunction]
#[pyo3(signature = (stage, config, backend = "mock", overrides = Vec::new(), generations = None, replay = None))]
fn run(
    py: Python<'_>,
    stage: &str,
    config: PathBuf,
    backend: &str,
    overrides: Vec<String>,
    generations: Option<PathBuf>,
    replay: Option<PathBuf>,
) -> PyResult<&'static str> {
    let backend = match backend {
        "mock" => BackendKind::Mock,
        "http" => BackendKind::Http,
        "replay" => BackendKind::Replay,
        other => return Err(value_err(format!("unknown backend {other:?}"))),
    };
    let stage = stage.to_string();
    let result: Result<Outcome, CliError> = py.detach(move || {
        let ctx = Context::load(&config, &overrides, backend)?;
        match stage.as_str() {
            "formulate" => forge_cli::pipeline::cmd_formulate(&ctx),
            "expand" => forge_cli::pipeline::cmd_expand(&ctx),
            "curate" => forge_cli::pipeline::cmd_curate(&ctx),
            "evaluate" => {
                forge_cli::evaluate::cmd_evaluate(&ctx, &EvaluateArgs { generations, replay, model_name: None })
            }
            "lora-verify" => forge_cli::lora_verify::cmd_lora_verify(&ctx),
            "human-eval" => forge_cli::human::cmd_human_eval(&ctx, None),
            "verify" => forge_cli::cmd_verify(&ctx),
            other => Err(CliError::Config(format!("unknown stage {other:?}"))),
        }
    });
    result.map(|o| o.as_str()).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn forge(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPair>()?;
    m.add_function(wrap_pyfunction!(clean_text, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_label, m)?)?;
    m.add_function(wrap_pyfunction!(bleu, m)?)?;
    m.add_function(wrap_pyfunction!(rouge_l, m)?)?;
    m.add_function(wrap_pyfunction!(perplexity, m)?)?;
    m.add_function(wrap_pyfunction!(macro_prf, m)?)?;
    m.add_function(wrap_pyfunction!(geometric_mean, m)?)?;
    m.add_function(wrap_pyfunction!(report_gm, m)?)?;
    m.add_function(wrap_pyfunction!(metric_names, m)?)?;
    m.add_function(wrap_pyfunction!(lora_param_count, m)?)?;
    m.add_function(wrap_pyfunction!(load_pairs, m)?)?;
    m.add_function(wrap_pyfunction!(dedup, m)?)?;
    m.add_function(wrap_pyfunction!(trigram_jaccard, m)?)?;
    m.add_function(wrap_pyfunction!(task_kinds, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
