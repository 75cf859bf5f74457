use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ingest;
use crate::json_block::{first_json_object, get_ci};
use crate::prompts::{render, PromptSet};
use crate::provider::{CompletionProvider, DecodingConfig, RepairError, Repairing};
use crate::retrieval::{top_k, EmbeddingProvider, RetrievalError, RetrievalIndex};

use super::plan::{plan, topological_order, Subtask};
use super::registry::{classify_error, CallError, RegisteredTool, ScopedLookup, ToolCall, ToolExecutor, ToolRegistry};
use super::trace::{AgentTrace, Step, StepOutcome, TerminatedReason};
use super::AgentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum InstructionMode {
    RawDocumentation,
    #[default]
    EasyToolInstruction,
}

impl std::str::FromStr for InstructionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "raw" | "rawdocumentation" | "raw_documentation" => Ok(Self::RawDocumentation),
            "easytool" | "instruction" | "easytoolinstruction" | "easytool_instruction" => {
                Ok(Self::EasyToolInstruction)
            }
            other => Err(format!("unknown instruction mode `{other}` (raw or easytool)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub max_trials: u32,
    pub top_k: usize,
    pub step_budget: usize,
    pub instruction_mode: InstructionMode,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_trials: 3,
            top_k: 5,
            step_budget: 30,
            instruction_mode: InstructionMode::EasyToolInstruction,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.max_trials == 0 || self.top_k == 0 || self.step_budget == 0 {
            return Err(AgentError::InvalidConfig(
                "max_trials, top_k and step_budget must all be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// What the agent loop runs against. One provider serves planning,
/// selection and answer synthesis.
pub struct AgentDeps<'a> {
    pub provider: &'a dyn CompletionProvider,
    pub prompts: &'a PromptSet,
    pub decoding: DecodingConfig,
    pub embedding: &'a dyn EmbeddingProvider,
    pub index: &'a RetrievalIndex,
    pub registry: &'a ToolRegistry,
    pub executor: &'a dyn ToolExecutor,
}

pub fn retrieve_candidates(
    subtask: &Subtask,
    index: &RetrievalIndex,
    k: usize,
    embedding: &dyn EmbeddingProvider,
) -> Result<Vec<String>, AgentError> {
    Ok(top_k(index, &subtask.text, k, embedding)?
        .into_iter()
        .map(|s| s.tool_id)
        .collect())
}

/// Text a tool is retrieved by: the generated description when instructions
/// are in use, otherwise the documented purposes.
pub fn retrieval_text(tool: &RegisteredTool, mode: InstructionMode) -> String {
    if let (InstructionMode::EasyToolInstruction, Some(i)) = (mode, &tool.instruction) {
        return i.description.clone();
    }
    let doc = &tool.documentation;
    let mut s = doc.tool_description.clone();
    for f in &doc.functions {
        s.push_str(&format!("\n{} {}", f.name, f.description));
    }
    s
}

/// Index every registered tool by its [`retrieval_text`].
pub fn index_registry(
    registry: &ToolRegistry,
    mode: InstructionMode,
    embedding: &dyn EmbeddingProvider,
) -> Result<RetrievalIndex, RetrievalError> {
    let texts: Vec<(String, String)> = registry
        .tools()
        .map(|t| (t.documentation.tool_name.clone(), retrieval_text(t, mode)))
        .collect();
    RetrievalIndex::build(texts.iter().map(|(a, b)| (a.as_str(), b.as_str())), embedding)
}

/// How one candidate is shown to the selector.
pub fn present_candidate(tool: &RegisteredTool, mode: InstructionMode) -> String {
    match (mode, &tool.instruction) {
        (InstructionMode::EasyToolInstruction, Some(ins)) => ins.to_json_pretty(),
        _ => ingest::serialize_doc(&tool.documentation),
    }
}

pub fn render_selection_prompt(
    prompts: &PromptSet,
    subtask: &Subtask,
    context: &str,
    candidates: &[&RegisteredTool],
    mode: InstructionMode,
) -> String {
    let mut listing = String::new();
    for (i, c) in candidates.iter().enumerate() {
        listing.push_str(&format!(
            "Tool {}: {}\n{}\n",
            i + 1,
            c.documentation.tool_name,
            present_candidate(c, mode)
        ));
    }
    render(
        &prompts.selection,
        &[("subtask", &subtask.text), ("context", context), ("candidates", &listing)],
    )
}

/// Pull `{"tool", "function", "arguments"}` out of a selector completion.
pub fn parse_tool_call(output: &str) -> Result<ToolCall, String> {
    let obj = first_json_object(output)?;
    let text = |keys: &[&str]| {
        keys.iter()
            .find_map(|k| get_ci(&obj, k).and_then(Value::as_str))
            .map(str::to_string)
    };
    let tool_id = text(&["tool", "tool_name", "tool_id"]).ok_or("the call needs a \"tool\" name")?;
    let function_name = text(&["function", "function_name", "api_name"]).ok_or("the call needs a \"function\" name")?;
    let arguments = match get_ci(&obj, "arguments").or_else(|| get_ci(&obj, "parameters")) {
        Some(Value::Object(m)) => m.clone(),
        None | Some(Value::Null) => Default::default(),
        Some(_) => return Err("\"arguments\" must be an object".into()),
    };
    Ok(ToolCall {
        tool_id,
        function_name,
        arguments,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn select_tool(
    subtask: &Subtask,
    context: &str,
    candidates: &[&RegisteredTool],
    mode: InstructionMode,
    provider: &dyn CompletionProvider,
    prompts: &PromptSet,
    decoding: &DecodingConfig,
    excluded: &BTreeSet<String>,
) -> Result<ToolCall, AgentError> {
    let offered: Vec<&RegisteredTool> = candidates
        .iter()
        .copied()
        .filter(|c| !excluded.contains(&c.documentation.tool_name))
        .collect();
    if offered.is_empty() {
        return Err(AgentError::NoCandidatesLeft);
    }
    let prompt = render_selection_prompt(prompts, subtask, context, &offered, mode);
    Repairing::new(provider, decoding.clone())
        .complete_checked(&prompt, |out| {
            let call = parse_tool_call(out)?;
            if excluded.contains(&call.tool_id) {
                return Err(format!("`{}` already failed for this subtask; choose another tool", call.tool_id));
            }
            Ok(call)
        })
        .map_err(|e| match e {
            RepairError::Provider(p) => AgentError::Provider(p),
            RepairError::Rejected { violation, .. } => AgentError::SelectionFailed(violation),
        })
}

/// Validate a call against the registry, then run it. With `allowed`, tools
/// outside that set count as nonexistent.
pub fn execute_call(
    call: &ToolCall,
    executor: &dyn ToolExecutor,
    allowed: Option<&[String]>,
) -> (StepOutcome, String) {
    let label = match allowed {
        Some(allowed) => classify_error(call, &ScopedLookup::new(executor, allowed)),
        None => classify_error(call, executor),
    };
    match label {
        Some(CallError::ToolNameError) => (
            StepOutcome::ToolNameError,
            format!("no function `{}` in tool `{}`", call.function_name, call.tool_id),
        ),
        Some(CallError::ParameterError) => {
            let spec = executor
                .lookup(&call.tool_id, &call.function_name)
                .expect("classified as existing");
            let reasons: Vec<String> = spec
                .check_arguments(&call.arguments)
                .iter()
                .map(ToString::to_string)
                .collect();
            (StepOutcome::ParameterError, reasons.join("; "))
        }
        None => match executor.execute(call) {
            Ok(r) => (StepOutcome::Success, r),
            Err(e) => (StepOutcome::ExecutionFailure, e.0),
        },
    }
}

fn dependency_context(subtask: &Subtask, subtasks: &[Subtask], results: &BTreeMap<u32, String>) -> String {
    if subtask.depends_on.is_empty() {
        return String::new();
    }
    let mut s = String::from("Results of earlier subtasks:\n");
    for d in &subtask.depends_on {
        let text = subtasks.iter().find(|t| t.id == *d).map(|t| t.text.as_str()).unwrap_or("");
        let r = results.get(d).map(String::as_str).unwrap_or("");
        s.push_str(&format!("({d}) {text}: {r}\n"));
    }
    s
}

pub fn render_answer_prompt(
    prompts: &PromptSet,
    request: &str,
    subtasks: &[Subtask],
    results: &BTreeMap<u32, String>,
) -> String {
    let mut listing = String::new();
    for s in subtasks {
        if let Some(r) = results.get(&s.id) {
            listing.push_str(&format!("({}) {}: {}\n", s.id, s.text, r));
        }
    }
    render(&prompts.answer, &[("request", request), ("results", &listing)])
}

/// Plan, then for each subtask in dependency order retrieve, select and
/// execute, retrying with the failed tool excluded up to `max_trials` times.
/// Only provider transport failures and bad configuration are errors; every
/// other ending is recorded in the trace.
pub fn run_agent(request: &str, config: &AgentConfig, deps: &AgentDeps<'_>) -> Result<AgentTrace, AgentError> {
    config.validate()?;
    let mut trace = AgentTrace {
        request: request.to_string(),
        config: config.clone(),
        subtasks: Vec::new(),
        steps: Vec::new(),
        final_answer: None,
        terminated_reason: TerminatedReason::Answered,
    };
    match plan(request, deps.provider, deps.prompts, &deps.decoding) {
        Ok(p) => trace.subtasks = p,
        Err(AgentError::PlanningFailed(reason)) => {
            log::warn!("planning failed: {reason}");
            trace.terminated_reason = TerminatedReason::PlanningFailed;
            return Ok(trace);
        }
        Err(e) => return Err(e),
    }

    let mut results: BTreeMap<u32, String> = BTreeMap::new();
    'subtasks: for id in topological_order(&trace.subtasks) {
        let subtask = trace.subtasks.iter().find(|s| s.id == id).expect("ordered ids exist").clone();
        let retrieved = retrieve_candidates(&subtask, deps.index, config.top_k, deps.embedding)?;
        let context = dependency_context(&subtask, &trace.subtasks, &results);
        let mut excluded: BTreeSet<String> = BTreeSet::new();
        let mut solved = false;
        for attempt in 1..=config.max_trials {
            if trace.steps.len() >= config.step_budget {
                trace.terminated_reason = TerminatedReason::BudgetExhausted;
                break 'subtasks;
            }
            let offered: Vec<String> = retrieved.iter().filter(|t| !excluded.contains(*t)).cloned().collect();
            let tools: Vec<&RegisteredTool> = offered.iter().filter_map(|t| deps.registry.get(t)).collect();
            let selection = select_tool(
                &subtask,
                &context,
                &tools,
                config.instruction_mode,
                deps.provider,
                deps.prompts,
                &deps.decoding,
                &excluded,
            );
            let (call, outcome, raw_result) = match selection {
                Ok(call) => {
                    let (outcome, raw) = execute_call(&call, deps.executor, Some(&offered));
                    (call, outcome, raw)
                }
                Err(AgentError::NoCandidatesLeft) => {
                    trace.steps.push(Step {
                        subtask_id: id,
                        attempt,
                        candidates: offered,
                        call: ToolCall::none(),
                        outcome: StepOutcome::ExecutionFailure,
                        raw_result: "no candidate tools left".into(),
                    });
                    break;
                }
                Err(AgentError::SelectionFailed(reason)) => (
                    ToolCall::none(),
                    StepOutcome::ExecutionFailure,
                    format!("selection failed: {reason}"),
                ),
                Err(e) => return Err(e),
            };
            let success = outcome == StepOutcome::Success;
            if success {
                results.insert(id, raw_result.clone());
            } else if !call.is_none() {
                excluded.insert(call.tool_id.clone());
            }
            trace.steps.push(Step {
                subtask_id: id,
                attempt,
                candidates: offered,
                call,
                outcome,
                raw_result,
            });
            if success {
                solved = true;
                break;
            }
        }
        if !solved {
            trace.terminated_reason = TerminatedReason::TrialsExhausted;
            break;
        }
    }

    if trace.terminated_reason == TerminatedReason::Answered {
        let prompt = render_answer_prompt(deps.prompts, request, &trace.subtasks, &results);
        let answer = deps.provider.complete(&prompt, &deps.decoding)?;
        trace.final_answer = Some(answer.trim().to_string());
    }
    Ok(trace)
}
