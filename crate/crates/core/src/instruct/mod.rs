//! Turning tool documentation into concise tool instructions.
//!
//! Two generation stages run through a [`CompletionProvider`]: a tool-level
//! usage description, then a scenario + parameters example for each
//! function. Every completion is checked and, if it violates an invariant,
//! re-asked with the violation appended (see [`Repairing`]). Generated
//! examples are then validated against the schema and, when an executor is
//! available, by actually running them.

mod types;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::agent::{ToolCall, ToolExecutor};
use crate::ingest::{self, FunctionSpec, IngestError, ToolDocumentation};
use crate::json_block::{first_json_object, get_ci};
use crate::prompts::{render, Demonstration, PromptSet};
use crate::provider::{repair_prompt, CompletionProvider, DecodingConfig, ProviderError, RepairError, Repairing};

pub use types::{FunctionGuideline, ToolInstruction, UsageExample, ValidationReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstructError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    InvalidDocument(#[from] IngestError),
    #[error("description rejected: {violation}")]
    DescriptionRejected { violation: String, last_output: String },
    #[error("guideline for `{function}` rejected: {violation}")]
    GuidelineRejected { function: String, violation: String },
    #[error("no valid guideline for {} function(s)", failures.len())]
    InstructionIncomplete {
        partial: Box<ToolInstruction>,
        failures: Vec<ValidationReport>,
    },
}

const DESCRIPTION_CUE: &str = "Tool usage description:";

fn description_examples(demos: &[Demonstration]) -> String {
    if demos.is_empty() {
        return String::new();
    }
    let mut s = String::from("Here is an example:\n");
    for d in demos {
        s.push_str(&format!("{}\n{DESCRIPTION_CUE}\n{}\n", d.input, d.output));
    }
    s
}

/// Stage one prompt: task, demonstrations, the serialized document, and the
/// description cue.
pub fn render_description_prompt(
    prompts: &PromptSet,
    doc: &ToolDocumentation,
    demos: &[Demonstration],
) -> String {
    render(
        &prompts.description,
        &[
            ("examples", &description_examples(demos)),
            ("documentation", &ingest::serialize_doc(doc)),
        ],
    )
}

fn parameter_list(func: &FunctionSpec) -> String {
    serde_json::to_string_pretty(&json!({
        "required_parameters": func.required_parameters,
        "optional_parameters": func.optional_parameters,
    }))
    .expect("parameters serialize")
}

/// Stage two prompt for one function.
pub fn render_guideline_prompt(
    prompts: &PromptSet,
    tool_name: &str,
    doc_desc: &str,
    func: &FunctionSpec,
    demos: &[Demonstration],
) -> String {
    let examples = if demos.is_empty() {
        String::new()
    } else {
        let mut s = String::from("Here is an example:\n");
        for d in demos {
            s.push_str(&format!("{}\n{}\n", d.input, d.output));
        }
        s
    };
    let purpose = if func.description.trim().is_empty() {
        "(no description provided)"
    } else {
        func.description.trim()
    };
    render(
        &prompts.guideline,
        &[
            ("examples", &examples),
            ("tool_purpose", doc_desc.trim()),
            ("function_name", &func.name),
            ("tool_name", tool_name),
            ("function_purpose", purpose),
            ("parameter_list", &parameter_list(func)),
        ],
    )
}

/// Whether a description names the tool and each of its functions.
pub fn check_description(doc: &ToolDocumentation, text: &str) -> Result<String, String> {
    let text = text.trim();
    if text.is_empty() {
        return Err("the description is empty".into());
    }
    let lower = text.to_lowercase();
    let mut missing = Vec::new();
    if !lower.contains(&doc.tool_name.to_lowercase()) {
        missing.push(format!("the tool name '{}'", doc.tool_name));
    }
    for f in &doc.functions {
        if !lower.contains(&f.name.to_lowercase()) {
            missing.push(format!("the function '{}'", f.name));
        }
    }
    if missing.is_empty() {
        Ok(text.to_string())
    } else {
        Err(format!("the description must mention {}", missing.join(", ")))
    }
}

/// Parse a Scenario/Parameters block and enforce the example invariants.
pub fn parse_usage_example(output: &str, func: &FunctionSpec) -> Result<UsageExample, String> {
    let obj = first_json_object(output)?;
    let scenario = get_ci(&obj, "Scenario")
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or("the output needs a non-empty \"Scenario\" string")?;
    let parameters = match get_ci(&obj, "Parameters") {
        Some(Value::Object(m)) => m.clone(),
        Some(Value::Null) | None if !func.has_parameters() => Map::new(),
        _ => return Err("the output needs a \"Parameters\" object".into()),
    };
    let example = UsageExample {
        scenario: scenario.to_string(),
        parameters,
    };
    let violations = example.coverage_violations(func);
    if !func.has_parameters() && !example.parameters.is_empty() {
        return Err("the function has no parameters, so \"Parameters\" must be {}".into());
    }
    if violations.is_empty() {
        Ok(example)
    } else {
        Err(violations.join("; "))
    }
}

/// Short purpose line for a function: its own first description line, or
/// the sentence of the generated tool description that mentions it.
fn purpose_for(func: &FunctionSpec, tool_description: &str) -> String {
    if let Some(line) = func.description.lines().map(str::trim).find(|l| !l.is_empty()) {
        return line.to_string();
    }
    tool_description
        .split_inclusive(['.', '\n'])
        .map(str::trim)
        .find(|s| s.contains(&func.name))
        .unwrap_or(tool_description.trim())
        .trim_start_matches(|c: char| c.is_ascii_digit() || c == '.' || c == ' ')
        .to_string()
}

/// Check a guideline against its function. Schema problems never abort; they
/// are reported. With an executor, a schema-valid example is also executed.
pub fn validate_guideline(
    tool_id: &str,
    guideline: &FunctionGuideline,
    spec: &FunctionSpec,
    executor: Option<&dyn ToolExecutor>,
) -> ValidationReport {
    let mut reasons = Vec::new();
    if guideline.function_name != spec.name {
        reasons.push(format!(
            "guideline is for `{}`, not `{}`",
            guideline.function_name, spec.name
        ));
    }
    if guideline.required_parameters != spec.required_parameters
        || guideline.optional_parameters != spec.optional_parameters
    {
        reasons.push("parameter lists differ from the documentation".into());
    }
    let arguments = &guideline.example.parameters;
    reasons.extend(spec.check_arguments(arguments).iter().map(ToString::to_string));
    let parameter_schema_ok = reasons.is_empty();

    let mut report = ValidationReport {
        function_name: spec.name.clone(),
        executed: false,
        parameter_schema_ok,
        execution_ok: None,
        failure_reason: None,
    };
    if let Some(executor) = executor {
        if parameter_schema_ok {
            let call = ToolCall {
                tool_id: tool_id.to_string(),
                function_name: spec.name.clone(),
                arguments: arguments.clone(),
            };
            report.executed = true;
            match executor.execute(&call) {
                Ok(_) => report.execution_ok = Some(true),
                Err(e) => {
                    report.execution_ok = Some(false);
                    reasons.push(format!("execution failed: {}", e.0));
                }
            }
        }
    }
    if !reasons.is_empty() {
        report.failure_reason = Some(reasons.join("; "));
    }
    report
}

/// Runs both generation stages for documents against one provider.
pub struct InstructionGenerator<'a> {
    provider: &'a dyn CompletionProvider,
    prompts: &'a PromptSet,
    decoding: DecodingConfig,
    executor: Option<&'a dyn ToolExecutor>,
}

impl<'a> InstructionGenerator<'a> {
    pub fn new(provider: &'a dyn CompletionProvider, prompts: &'a PromptSet) -> Self {
        Self {
            provider,
            prompts,
            decoding: DecodingConfig::default(),
            executor: None,
        }
    }

    pub fn with_executor(mut self, executor: &'a dyn ToolExecutor) -> Self {
        self.executor = Some(executor);
        self
    }

    pub fn with_decoding(mut self, decoding: DecodingConfig) -> Self {
        self.decoding = decoding;
        self
    }

    fn repairing(&self) -> Repairing<'a> {
        Repairing::new(self.provider, self.decoding.clone())
    }

    pub fn generate_description(&self, doc: &ToolDocumentation) -> Result<String, InstructError> {
        let prompt = render_description_prompt(self.prompts, doc, &self.prompts.demos.description);
        self.repairing()
            .complete_checked(&prompt, |out| check_description(doc, out))
            .map_err(|e| match e {
                RepairError::Provider(p) => InstructError::Provider(p),
                RepairError::Rejected {
                    violation,
                    last_output,
                    ..
                } => InstructError::DescriptionRejected {
                    violation,
                    last_output,
                },
            })
    }

    fn guideline_from_prompt(
        &self,
        prompt: &str,
        doc_desc: &str,
        func: &FunctionSpec,
    ) -> Result<FunctionGuideline, InstructError> {
        let example = self
            .repairing()
            .complete_checked(prompt, |out| parse_usage_example(out, func))
            .map_err(|e| match e {
                RepairError::Provider(p) => InstructError::Provider(p),
                RepairError::Rejected { violation, .. } => InstructError::GuidelineRejected {
                    function: func.name.clone(),
                    violation,
                },
            })?;
        Ok(FunctionGuideline::from_spec(func, purpose_for(func, doc_desc), example))
    }

    pub fn generate_guideline(
        &self,
        tool_name: &str,
        doc_desc: &str,
        func: &FunctionSpec,
    ) -> Result<FunctionGuideline, InstructError> {
        let prompt = render_guideline_prompt(
            self.prompts,
            tool_name,
            doc_desc,
            func,
            &self.prompts.demos.guideline,
        );
        self.guideline_from_prompt(&prompt, doc_desc, func)
    }

    /// One function: generate, validate, and regenerate once with the
    /// failure reason if validation fails.
    fn guideline_with_validation(
        &self,
        doc: &ToolDocumentation,
        description: &str,
        func: &FunctionSpec,
    ) -> Result<Result<FunctionGuideline, ValidationReport>, InstructError> {
        let prompt = render_guideline_prompt(
            self.prompts,
            &doc.tool_name,
            description,
            func,
            &self.prompts.demos.guideline,
        );
        let mut last_report = None;
        let mut feedback: Option<(String, String)> = None;
        for _ in 0..2 {
            let attempt_prompt = match &feedback {
                None => prompt.clone(),
                Some((output, reason)) => repair_prompt(&prompt, output, reason),
            };
            match self.guideline_from_prompt(&attempt_prompt, description, func) {
                Ok(g) => {
                    let report = validate_guideline(&doc.tool_name, &g, func, self.executor);
                    if report.passed() {
                        return Ok(Ok(g));
                    }
                    let example = serde_json::to_string(&g.example).unwrap_or_default();
                    feedback = Some((
                        example,
                        format!(
                            "the example failed validation: {}",
                            report.failure_reason.clone().unwrap_or_default()
                        ),
                    ));
                    last_report = Some(report);
                }
                Err(InstructError::GuidelineRejected { violation, .. }) => {
                    let report = ValidationReport {
                        function_name: func.name.clone(),
                        executed: false,
                        parameter_schema_ok: false,
                        execution_ok: None,
                        failure_reason: Some(violation.clone()),
                    };
                    feedback = Some((String::new(), violation));
                    last_report = Some(report);
                }
                Err(e) => return Err(e),
            }
        }
        Ok(Err(last_report.expect("at least one attempt ran")))
    }

    /// Full pipeline for one document.
    pub fn build_instruction(&self, doc: &ToolDocumentation) -> Result<ToolInstruction, InstructError> {
        doc.validate()?;
        let description = self.generate_description(doc)?;
        let mut guidelines = Vec::with_capacity(doc.functions.len());
        let mut failures = Vec::new();
        for func in &doc.functions {
            match self.guideline_with_validation(doc, &description, func)? {
                Ok(g) => guidelines.push(g),
                Err(report) => failures.push(report),
            }
        }
        let instruction = ToolInstruction {
            tool_name: doc.tool_name.clone(),
            description,
            function_guidelines: guidelines,
        };
        if failures.is_empty() {
            Ok(instruction)
        } else {
            Err(InstructError::InstructionIncomplete {
                partial: Box::new(instruction),
                failures,
            })
        }
    }
}
