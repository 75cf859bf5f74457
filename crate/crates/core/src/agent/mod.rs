//! The plan / retrieve / select / execute loop and its tool inventory.

mod plan;
mod registry;
mod runtime;
mod trace;

use thiserror::Error;

use crate::provider::ProviderError;
use crate::retrieval::RetrievalError;

pub use plan::{parse_plan, plan, render_planning_prompt, topological_order, validate_plan, Subtask};
pub use registry::*;
pub use runtime::{
    execute_call, index_registry, parse_tool_call, present_candidate, render_answer_prompt, render_selection_prompt,
    retrieval_text, retrieve_candidates, run_agent, select_tool, AgentConfig, AgentDeps, InstructionMode,
};
pub use trace::{read_traces, AgentTrace, Step, StepOutcome, TerminatedReason, BUDGET_UNIT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("planning failed: {0}")]
    PlanningFailed(String),
    #[error("selection failed: {0}")]
    SelectionFailed(String),
    #[error("no candidate tools left")]
    NoCandidatesLeft,
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
}
