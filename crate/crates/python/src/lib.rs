//! Python bindings. Structured results (stats, reports, traces) come back as
//! plain dicts and lists.

use easytool_core::agent::{
    index_registry, read_traces, run_agent as core_run_agent, AgentConfig, AgentDeps, ArithmeticExecutor, InstructionMode,
    StaticExecutor, ToolExecutor, ToolRegistry,
};
use easytool_core::eval::{self, EvaluationReport};
use easytool_core::ingest::{self, SourceFormat};
use easytool_core::instruct::{self, InstructionGenerator};
use easytool_core::prompts::PromptSet;
use easytool_core::provider::{DecodingConfig, ScriptedProvider};
use easytool_core::retrieval::{self, HashEmbedding};
use easytool_core::tokens::{self, StatsEntry};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_format(format: Option<&str>) -> PyResult<Option<SourceFormat>> {
    Ok(match format {
        None => None,
        Some("rapidapi") => Some(SourceFormat::RapidApiJson),
        Some("rest") => Some(SourceFormat::RestEndpointCatalog),
        Some("bare") => Some(SourceFormat::BareFunction),
        Some(other) => return Err(err(format!("unknown format `{other}` (rapidapi, rest or bare)"))),
    })
}

/// Normalized documentation of one tool.
#[pyclass(name = "ToolDocumentation", frozen, from_py_object)]
#[derive(Clone)]
struct PyDocumentation {
    inner: ingest::ToolDocumentation,
}

#[pymethods]
impl PyDocumentation {
    /// Parse raw documentation; the format is detected unless given.
    #[staticmethod]
    #[pyo3(signature = (text, format=None))]
    fn parse(text: &str, format: Option<&str>) -> PyResult<Self> {
        let inner = ingest::read_document(text, parse_format(format)?).map_err(err)?;
        Ok(Self { inner })
    }

    /// Every document in a file: one document, or canonical JSONL.
    #[staticmethod]
    #[pyo3(signature = (text, format=None))]
    fn parse_corpus(text: &str, format: Option<&str>) -> PyResult<Vec<Self>> {
        let docs = ingest::read_corpus(text, parse_format(format)?).map_err(err)?;
        Ok(docs.into_iter().map(|inner| Self { inner }).collect())
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ingest::parse_canonical(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        ingest::serialize_doc(&self.inner)
    }

    #[getter]
    fn tool_name(&self) -> &str {
        &self.inner.tool_name
    }

    #[getter]
    fn tool_description(&self) -> &str {
        &self.inner.tool_description
    }

    #[getter]
    fn function_names(&self) -> Vec<String> {
        self.inner.functions.iter().map(|f| f.name.clone()).collect()
    }

    fn split_per_function(&self) -> Vec<Self> {
        ingest::split_per_function(&self.inner)
            .into_iter()
            .map(|inner| Self { inner })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("ToolDocumentation({:?}, {} functions)", self.inner.tool_name, self.inner.functions.len())
    }
}

/// Concise description plus one guideline per function.
#[pyclass(name = "ToolInstruction", frozen, from_py_object)]
#[derive(Clone)]
struct PyInstruction {
    inner: instruct::ToolInstruction,
}

#[pymethods]
impl PyInstruction {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: serde_json::from_str(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json_pretty()
    }

    #[getter]
    fn tool_name(&self) -> &str {
        &self.inner.tool_name
    }

    #[getter]
    fn description(&self) -> &str {
        &self.inner.description
    }

    /// `{"Scenario": ..., "Parameters": {...}}` of one function.
    fn example<'py>(&self, py: Python<'py>, function: &str) -> PyResult<Bound<'py, PyAny>> {
        let g = self
            .inner
            .guideline(function)
            .ok_or_else(|| err(format!("no guideline for `{function}`")))?;
        to_py(py, &g.example)
    }

    fn __repr__(&self) -> String {
        format!("ToolInstruction({:?})", self.inner.tool_name)
    }
}

/// Generate instructions for `docs` with a scripted provider (rules JSON).
#[pyfunction]
#[pyo3(signature = (docs, script, execute_arithmetic=false))]
fn refine(docs: Vec<PyDocumentation>, script: &str, execute_arithmetic: bool) -> PyResult<Vec<PyInstruction>> {
    let provider = ScriptedProvider::from_json(script).map_err(err)?;
    let prompts = PromptSet::default();
    let executor = ArithmeticExecutor::new();
    let mut generator = InstructionGenerator::new(&provider, &prompts);
    if execute_arithmetic {
        generator = generator.with_executor(&executor);
    }
    docs.iter()
        .map(|d| {
            generator
                .build_instruction(&d.inner)
                .map(|inner| PyInstruction { inner })
                .map_err(err)
        })
        .collect()
}

/// Check one guideline against its documentation; returns the report.
#[pyfunction]
#[pyo3(signature = (instruction, doc, function, execute_arithmetic=false))]
fn validate_guideline<'py>(
    py: Python<'py>,
    instruction: &PyInstruction,
    doc: &PyDocumentation,
    function: &str,
    execute_arithmetic: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let g = instruction
        .inner
        .guideline(function)
        .ok_or_else(|| err(format!("no guideline for `{function}`")))?;
    let spec = doc
        .inner
        .function(function)
        .ok_or_else(|| err(format!("no function `{function}` in `{}`", doc.inner.tool_name)))?;
    let executor = ArithmeticExecutor::new();
    let ex: Option<&dyn ToolExecutor> = if execute_arithmetic { Some(&executor) } else { None };
    to_py(py, &instruct::validate_guideline(&doc.inner.tool_name, g, spec, ex))
}

#[pyfunction]
#[pyo3(signature = (text, tokenizer="fallback"))]
fn count_tokens(text: &str, tokenizer: &str) -> PyResult<usize> {
    let tk = tokens::tokenizer_by_name(tokenizer).map_err(err)?;
    Ok(tokens::count_tokens(text, tk.as_ref()))
}

/// Percentage of tokens saved, rounded to two decimals.
#[pyfunction]
fn reduction_ratio(doc_tokens: u64, ins_tokens: u64) -> PyResult<f64> {
    Ok(tokens::reduction_ratio(doc_tokens, ins_tokens).map_err(err)?.as_f64())
}

#[pyfunction]
#[pyo3(signature = (docs, tokenizer="fallback"))]
fn corpus_stats<'py>(py: Python<'py>, docs: Vec<PyDocumentation>, tokenizer: &str) -> PyResult<Bound<'py, PyAny>> {
    let tk = tokens::tokenizer_by_name(tokenizer).map_err(err)?;
    let entries: Vec<StatsEntry> = docs.iter().map(|d| StatsEntry::from_documentation(&d.inner)).collect();
    to_py(py, &tokens::corpus_stats(&entries, tk.as_ref()).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (instructions, tokenizer="fallback"))]
fn instruction_stats<'py>(
    py: Python<'py>,
    instructions: Vec<PyInstruction>,
    tokenizer: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let tk = tokens::tokenizer_by_name(tokenizer).map_err(err)?;
    let entries: Vec<StatsEntry> = instructions.iter().map(|i| StatsEntry::from_instruction(&i.inner)).collect();
    to_py(py, &tokens::corpus_stats(&entries, tk.as_ref()).map_err(err)?)
}

/// Dense index over tool descriptions with the hashed bag-of-words embedding.
#[pyclass(name = "RetrievalIndex", frozen)]
struct PyIndex {
    inner: retrieval::RetrievalIndex,
}

#[pymethods]
impl PyIndex {
    /// Build from `(tool_id, description)` pairs.
    #[staticmethod]
    fn build(items: Vec<(String, String)>) -> PyResult<Self> {
        let inner = retrieval::RetrievalIndex::build(
            items.iter().map(|(a, b)| (a.as_str(), b.as_str())),
            &HashEmbedding::default(),
        )
        .map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_instructions(instructions: Vec<PyInstruction>) -> PyResult<Self> {
        let ins: Vec<_> = instructions.into_iter().map(|i| i.inner).collect();
        Ok(Self {
            inner: retrieval::build_index(&ins, &HashEmbedding::default()).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: retrieval::RetrievalIndex::from_json(text, &HashEmbedding::default()).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn top_k(&self, query: &str, k: usize) -> PyResult<Vec<(String, f64)>> {
        Ok(retrieval::top_k(&self.inner, query, k, &HashEmbedding::default())
            .map_err(err)?
            .into_iter()
            .map(|s| (s.tool_id, s.score))
            .collect())
    }

    fn __len__(&self) -> usize {
        self.inner.entries().len()
    }
}

#[pyfunction]
fn ndcg_at_k(ranked: Vec<String>, relevant: Vec<String>, k: usize) -> f64 {
    retrieval::ndcg_at_k(&ranked, &relevant.into_iter().collect(), k)
}

/// Run the agent once and return the trace as JSONL. `script` is the rules
/// JSON of a scripted provider; `responses` configures the static executor.
#[pyfunction]
#[pyo3(signature = (request, docs, script, mode="easytool", instructions=None, responses=None, arithmetic=false, max_trials=3, top_k=5, step_budget=30))]
#[allow(clippy::too_many_arguments)]
fn run_agent(
    request: &str,
    docs: Vec<PyDocumentation>,
    script: &str,
    mode: &str,
    instructions: Option<Vec<PyInstruction>>,
    responses: Option<&str>,
    arithmetic: bool,
    max_trials: u32,
    top_k: usize,
    step_budget: usize,
) -> PyResult<String> {
    let mode: InstructionMode = mode.parse().map_err(err)?;
    let config = AgentConfig {
        max_trials,
        top_k,
        step_budget,
        instruction_mode: mode,
    };
    let registry = ToolRegistry::with_instructions(
        docs.into_iter().map(|d| d.inner).collect::<Vec<_>>(),
        instructions.unwrap_or_default().into_iter().map(|i| i.inner).collect::<Vec<_>>(),
    );
    let executor: Box<dyn ToolExecutor> = if arithmetic {
        Box::new(ArithmeticExecutor::new())
    } else {
        let ex = StaticExecutor::new(registry.clone());
        Box::new(match responses {
            Some(r) => ex.with_responses_json(r).map_err(err)?,
            None => ex,
        })
    };
    let embedding = HashEmbedding::default();
    let index = index_registry(&registry, mode, &embedding).map_err(err)?;
    let provider = ScriptedProvider::from_json(script).map_err(err)?;
    let prompts = PromptSet::default();
    let deps = AgentDeps {
        provider: &provider,
        prompts: &prompts,
        decoding: DecodingConfig::default(),
        embedding: &embedding,
        index: &index,
        registry: &registry,
        executor: executor.as_ref(),
    };
    Ok(core_run_agent(request, &config, &deps).map_err(err)?.to_jsonl())
}

/// Pass rate and tool error rates of a trace JSONL file's contents.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, traces: &str) -> PyResult<Bound<'py, PyAny>> {
    let traces = read_traces(traces).map_err(err)?;
    let report: EvaluationReport = EvaluationReport::base(&traces).map_err(err)?;
    to_py(py, &report)
}

#[pyfunction]
fn is_subsequence(needle: Vec<String>, haystack: Vec<String>) -> bool {
    eval::is_subsequence(&needle, &haystack, |a, b| a == b)
}

#[pyfunction]
fn extract_last_number(text: &str) -> Option<f64> {
    eval::extract_last_number(text)
}

#[pyfunction]
fn numeric_correct(answer: &str, gold: f64) -> bool {
    eval::numeric_correct(answer, gold)
}

#[pymodule]
fn easytool(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDocumentation>()?;
    m.add_class::<PyInstruction>()?;
    m.add_class::<PyIndex>()?;
    m.add_function(wrap_pyfunction!(refine, m)?)?;
    m.add_function(wrap_pyfunction!(validate_guideline, m)?)?;
    m.add_function(wrap_pyfunction!(count_tokens, m)?)?;
    m.add_function(wrap_pyfunction!(reduction_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(corpus_stats, m)?)?;
    m.add_function(wrap_pyfunction!(instruction_stats, m)?)?;
    m.add_function(wrap_pyfunction!(ndcg_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(run_agent, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(is_subsequence, m)?)?;
    m.add_function(wrap_pyfunction!(extract_last_number, m)?)?;
    m.add_function(wrap_pyfunction!(numeric_correct, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
