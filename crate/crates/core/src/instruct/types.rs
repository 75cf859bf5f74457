use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::ingest::{FunctionSpec, ParameterSpec};

/// Worked example of one call: when to make it and with which arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageExample {
    #[serde(rename = "Scenario")]
    pub scenario: String,
    #[serde(rename = "Parameters", default)]
    pub parameters: Map<String, Value>,
}

impl UsageExample {
    /// Violations of the example's own invariants against `spec`: undeclared
    /// keys and uncovered required parameters.
    pub fn coverage_violations(&self, spec: &FunctionSpec) -> Vec<String> {
        let mut out = Vec::new();
        for key in self.parameters.keys() {
            if spec.parameter(key).is_none() {
                out.push(format!("`{key}` is not a parameter of `{}`", spec.name));
            }
        }
        for p in &spec.required_parameters {
            if !self.parameters.contains_key(&p.name) {
                out.push(format!("required parameter `{}` is missing", p.name));
            }
        }
        out
    }
}

/// How and when to call one function. The parameter lists are always copies
/// of the source schema; only the purpose and example are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionGuideline {
    #[serde(rename = "name")]
    pub function_name: String,
    #[serde(rename = "description", default)]
    pub purpose: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_usage: Option<String>,
    #[serde(default)]
    pub required_parameters: Vec<ParameterSpec>,
    #[serde(default)]
    pub optional_parameters: Vec<ParameterSpec>,
    #[serde(rename = "Example")]
    pub example: UsageExample,
}

impl FunctionGuideline {
    pub fn from_spec(spec: &FunctionSpec, purpose: String, example: UsageExample) -> Self {
        Self {
            function_name: spec.name.clone(),
            purpose,
            tool_usage: spec.invocation_template.clone(),
            required_parameters: spec.required_parameters.clone(),
            optional_parameters: spec.optional_parameters.clone(),
            example,
        }
    }
}

/// Concise tool description plus one guideline per function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInstruction {
    pub tool_name: String,
    pub description: String,
    pub function_guidelines: Vec<FunctionGuideline>,
}

impl ToolInstruction {
    pub fn guideline(&self, function_name: &str) -> Option<&FunctionGuideline> {
        self.function_guidelines
            .iter()
            .find(|g| g.function_name == function_name)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("instruction always serializes")
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("instruction always serializes")
    }
}

/// Result of checking a generated guideline against its function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub function_name: String,
    pub executed: bool,
    pub parameter_schema_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub execution_ok: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.parameter_schema_ok && self.execution_ok != Some(false)
    }
}
