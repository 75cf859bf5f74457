use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::plan::Subtask;
use super::registry::ToolCall;
use super::runtime::AgentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepOutcome {
    Success,
    ToolNameError,
    ParameterError,
    ExecutionFailure,
}

impl StepOutcome {
    pub fn is_tool_error(self) -> bool {
        matches!(self, Self::ToolNameError | Self::ParameterError)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminatedReason {
    Answered,
    BudgetExhausted,
    TrialsExhausted,
    PlanningFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub subtask_id: u32,
    pub attempt: u32,
    pub candidates: Vec<String>,
    pub call: ToolCall,
    pub outcome: StepOutcome,
    pub raw_result: String,
}

pub const BUDGET_UNIT: &str = "tool_call_attempts";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrace {
    pub request: String,
    pub config: AgentConfig,
    pub subtasks: Vec<Subtask>,
    pub steps: Vec<Step>,
    pub final_answer: Option<String>,
    pub terminated_reason: TerminatedReason,
}

#[derive(Serialize, Deserialize)]
struct TraceHeader {
    request: String,
    config: AgentConfig,
    subtasks: Vec<Subtask>,
    final_answer: Option<String>,
    terminated_reason: TerminatedReason,
    budget_unit: String,
    n_steps: usize,
}

impl AgentTrace {
    /// Tool ids of successful steps, in execution order.
    pub fn successful_tool_path(&self) -> Vec<String> {
        self.steps
            .iter()
            .filter(|s| s.outcome == StepOutcome::Success)
            .map(|s| s.call.tool_id.clone())
            .collect()
    }

    /// `tool_id::function` for each successful step.
    pub fn successful_call_path(&self) -> Vec<String> {
        self.steps
            .iter()
            .filter(|s| s.outcome == StepOutcome::Success)
            .map(|s| format!("{}::{}", s.call.tool_id, s.call.function_name))
            .collect()
    }

    /// One `{"trace": ...}` record followed by one `{"step": ...}` per step.
    pub fn to_jsonl(&self) -> String {
        let header = TraceHeader {
            request: self.request.clone(),
            config: self.config.clone(),
            subtasks: self.subtasks.clone(),
            final_answer: self.final_answer.clone(),
            terminated_reason: self.terminated_reason,
            budget_unit: BUDGET_UNIT.into(),
            n_steps: self.steps.len(),
        };
        let mut out = serde_json::to_string(&serde_json::json!({ "trace": header })).expect("trace serializes");
        out.push('\n');
        for s in &self.steps {
            out.push_str(&serde_json::to_string(&serde_json::json!({ "step": s })).expect("step serializes"));
            out.push('\n');
        }
        out
    }
}

/// Read every trace in a JSONL stream. Lines with a `header` key are skipped.
pub fn read_traces(text: &str) -> Result<Vec<AgentTrace>, String> {
    let mut traces: Vec<(AgentTrace, usize)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |e: String| format!("line {}: {e}", i + 1);
        let v: Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if v.get("header").is_some() {
            continue;
        }
        if let Some(h) = v.get("trace") {
            let h: TraceHeader = serde_json::from_value(h.clone()).map_err(|e| bad(e.to_string()))?;
            traces.push((
                AgentTrace {
                    request: h.request,
                    config: h.config,
                    subtasks: h.subtasks,
                    steps: Vec::new(),
                    final_answer: h.final_answer,
                    terminated_reason: h.terminated_reason,
                },
                h.n_steps,
            ));
        } else if let Some(s) = v.get("step") {
            let step: Step = serde_json::from_value(s.clone()).map_err(|e| bad(e.to_string()))?;
            let (t, _) = traces
                .last_mut()
                .ok_or_else(|| bad("step before any trace record".into()))?;
            t.steps.push(step);
        } else {
            return Err(bad("expected a trace or step record".into()));
        }
    }
    for (t, n) in &traces {
        if t.steps.len() != *n {
            return Err(format!(
                "trace for `{}` declares {n} steps but has {}",
                t.request,
                t.steps.len()
            ));
        }
    }
    Ok(traces.into_iter().map(|(t, _)| t).collect())
}
