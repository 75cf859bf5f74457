use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::json_block::{first_json_object, get_ci};
use crate::prompts::{render, PromptSet};
use crate::provider::{CompletionProvider, DecodingConfig, RepairError, Repairing};

use super::AgentError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtask {
    pub id: u32,
    #[serde(alias = "task")]
    pub text: String,
    #[serde(default)]
    pub depends_on: Vec<u32>,
}

/// Check ids, references and acyclicity. Returns the subtasks sorted by id.
pub fn validate_plan(mut subtasks: Vec<Subtask>) -> Result<Vec<Subtask>, String> {
    if subtasks.is_empty() {
        return Err("the plan needs at least one subtask".into());
    }
    subtasks.sort_by_key(|s| s.id);
    for (i, s) in subtasks.iter().enumerate() {
        if s.id as usize != i + 1 {
            return Err("subtask ids must be 1, 2, 3, ... without gaps or repeats".into());
        }
        if s.text.trim().is_empty() {
            return Err(format!("subtask {} has no task text", s.id));
        }
    }
    let n = subtasks.len() as u32;
    for s in &subtasks {
        for d in &s.depends_on {
            if *d == s.id || *d == 0 || *d > n {
                return Err(format!("subtask {} depends on invalid id {d}", s.id));
            }
        }
    }
    if topological_order(&subtasks).len() != subtasks.len() {
        return Err("the dependencies contain a cycle".into());
    }
    Ok(subtasks)
}

/// Kahn's algorithm, always taking the smallest ready id. Subtasks on a
/// cycle are left out of the result.
pub fn topological_order(subtasks: &[Subtask]) -> Vec<u32> {
    let mut done: BTreeSet<u32> = BTreeSet::new();
    let mut order = Vec::with_capacity(subtasks.len());
    loop {
        let next = subtasks
            .iter()
            .filter(|s| !done.contains(&s.id))
            .filter(|s| s.depends_on.iter().all(|d| done.contains(d)))
            .map(|s| s.id)
            .min();
        match next {
            Some(id) => {
                done.insert(id);
                order.push(id);
            }
            None => return order,
        }
    }
}

pub fn parse_plan(output: &str) -> Result<Vec<Subtask>, String> {
    let obj = first_json_object(output)?;
    let list = get_ci(&obj, "subtasks")
        .and_then(Value::as_array)
        .ok_or("the output needs a \"subtasks\" list")?;
    let subtasks = list
        .iter()
        .map(|v| serde_json::from_value::<Subtask>(v.clone()).map_err(|e| format!("bad subtask: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    validate_plan(subtasks)
}

pub fn render_planning_prompt(prompts: &PromptSet, request: &str) -> String {
    render(&prompts.planning, &[("request", request)])
}

/// Ask the provider for a plan, repairing malformed output at most twice.
pub fn plan(
    request: &str,
    provider: &dyn CompletionProvider,
    prompts: &PromptSet,
    decoding: &DecodingConfig,
) -> Result<Vec<Subtask>, AgentError> {
    if request.trim().is_empty() {
        return Err(AgentError::PlanningFailed("the request is empty".into()));
    }
    Repairing::new(provider, decoding.clone())
        .complete_checked(&render_planning_prompt(prompts, request), parse_plan)
        .map_err(|e| match e {
            RepairError::Provider(p) => AgentError::Provider(p),
            RepairError::Rejected { violation, .. } => AgentError::PlanningFailed(violation),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(id: u32, deps: &[u32]) -> Subtask {
        Subtask {
            id,
            text: format!("t{id}"),
            depends_on: deps.to_vec(),
        }
    }

    #[test]
    fn diamond_order() {
        let p = vec![st(4, &[2, 3]), st(3, &[1]), st(2, &[1]), st(1, &[])];
        let p = validate_plan(p).unwrap();
        assert_eq!(topological_order(&p), vec![1, 2, 3, 4]);
        let q = vec![st(1, &[3]), st(2, &[]), st(3, &[2])];
        assert_eq!(topological_order(&q), vec![2, 3, 1]);
    }

    #[test]
    fn rejects_bad_plans() {
        assert!(validate_plan(vec![]).is_err());
        assert!(validate_plan(vec![st(1, &[]), st(3, &[])]).is_err());
        assert!(validate_plan(vec![st(1, &[2]), st(2, &[1])]).unwrap_err().contains("cycle"));
        assert!(validate_plan(vec![st(1, &[1])]).is_err());
        assert!(validate_plan(vec![st(1, &[5])]).is_err());
    }

    #[test]
    fn parses_planner_output() {
        let out = r#"Plan: {"subtasks": [{"id": 1, "task": "find a", "depends_on": []}, {"id": 2, "task": "use a", "depends_on": [1]}]}"#;
        let p = parse_plan(out).unwrap();
        assert_eq!(p[1].text, "use a");
        assert_eq!(p[1].depends_on, vec![1]);
        assert!(parse_plan("no plan").is_err());
    }
}
