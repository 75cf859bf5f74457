//! Tool inventory, executors, and call classification.

use std::collections::HashMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::ingest::{self, FunctionSpec, ToolDocumentation};
use crate::instruct::ToolInstruction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool_id: String,
    pub function_name: String,
    #[serde(default)]
    pub arguments: Map<String, Value>,
}

impl ToolCall {
    pub fn new(tool_id: impl Into<String>, function_name: impl Into<String>, arguments: Value) -> Self {
        Self {
            tool_id: tool_id.into(),
            function_name: function_name.into(),
            arguments: arguments.as_object().cloned().unwrap_or_default(),
        }
    }

    /// Stand-in for a step where no call could be formed.
    pub fn none() -> Self {
        Self {
            tool_id: String::new(),
            function_name: String::new(),
            arguments: Map::new(),
        }
    }

    pub fn is_none(&self) -> bool {
        self.tool_id.is_empty() && self.function_name.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionFailure(pub String);

/// Resolve `(tool_id, function_name)` to its declared schema.
pub trait ToolLookup {
    fn lookup(&self, tool_id: &str, function_name: &str) -> Option<&FunctionSpec>;
}

/// Something that can run tool calls. Implementations must be safe to call
/// from several agent sessions at once.
pub trait ToolExecutor: ToolLookup + Send + Sync {
    fn execute(&self, call: &ToolCall) -> Result<String, ExecutionFailure>;
}

/// The two tool-related error kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CallError {
    /// The named function does not exist in the inventory.
    ToolNameError,
    /// The function exists but the arguments do not fit its schema.
    ParameterError,
}

/// Label a call. Name errors take precedence over parameter errors.
pub fn classify_error(call: &ToolCall, registry: &dyn ToolLookup) -> Option<CallError> {
    let spec = match registry.lookup(&call.tool_id, &call.function_name) {
        Some(spec) => spec,
        None => return Some(CallError::ToolNameError),
    };
    if spec.check_arguments(&call.arguments).is_empty() {
        None
    } else {
        Some(CallError::ParameterError)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegisteredTool {
    pub documentation: ToolDocumentation,
    pub instruction: Option<ToolInstruction>,
}

/// The tool inventory, keyed by tool name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ToolRegistry {
    tools: IndexMap<String, RegisteredTool>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_documents(docs: impl IntoIterator<Item = ToolDocumentation>) -> Self {
        let mut r = Self::new();
        for d in docs {
            r.insert(d, None);
        }
        r
    }

    /// Pair each document with the instruction of the same tool name, if any.
    pub fn with_instructions(
        docs: impl IntoIterator<Item = ToolDocumentation>,
        instructions: impl IntoIterator<Item = ToolInstruction>,
    ) -> Self {
        let mut r = Self::from_documents(docs);
        for ins in instructions {
            if let Some(t) = r.tools.get_mut(&ins.tool_name) {
                t.instruction = Some(ins);
            }
        }
        r
    }

    pub fn insert(&mut self, documentation: ToolDocumentation, instruction: Option<ToolInstruction>) {
        self.tools.insert(
            documentation.tool_name.clone(),
            RegisteredTool {
                documentation,
                instruction,
            },
        );
    }

    pub fn get(&self, tool_id: &str) -> Option<&RegisteredTool> {
        self.tools.get(tool_id)
    }

    pub fn tools(&self) -> impl Iterator<Item = &RegisteredTool> {
        self.tools.values()
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }
}

impl ToolLookup for ToolRegistry {
    fn lookup(&self, tool_id: &str, function_name: &str) -> Option<&FunctionSpec> {
        self.tools.get(tool_id)?.documentation.function(function_name)
    }
}

/// A view of a lookup restricted to some tool ids; calls outside the set
/// resolve to nothing.
pub struct ScopedLookup<'a> {
    inner: &'a dyn ToolLookup,
    allowed: &'a [String],
}

impl<'a> ScopedLookup<'a> {
    pub fn new(inner: &'a dyn ToolLookup, allowed: &'a [String]) -> Self {
        Self { inner, allowed }
    }
}

impl ToolLookup for ScopedLookup<'_> {
    fn lookup(&self, tool_id: &str, function_name: &str) -> Option<&FunctionSpec> {
        if self.allowed.iter().any(|a| a == tool_id) {
            self.inner.lookup(tool_id, function_name)
        } else {
            None
        }
    }
}

const FUNCQA_SIGNATURES: &str = include_str!("../../fixtures/funcqa.txt");

/// Local executor for the thirteen arithmetic tools. Each takes
/// `input: List` of numbers and returns the result with two decimals.
#[derive(Debug, Clone)]
pub struct ArithmeticExecutor {
    registry: ToolRegistry,
}

impl Default for ArithmeticExecutor {
    fn default() -> Self {
        Self::new()
    }
}

impl ArithmeticExecutor {
    pub fn new() -> Self {
        Self {
            registry: ToolRegistry::from_documents(Self::documents()),
        }
    }

    /// One single-function tool per operation.
    pub fn documents() -> Vec<ToolDocumentation> {
        let doc = ingest::parse_bare_function(FUNCQA_SIGNATURES).expect("bundled signatures parse");
        ingest::split_per_function(&doc)
    }

    pub fn signatures() -> &'static str {
        FUNCQA_SIGNATURES
    }

    pub fn registry(&self) -> &ToolRegistry {
        &self.registry
    }
}

fn fail<T>(msg: impl Into<String>) -> Result<T, ExecutionFailure> {
    Err(ExecutionFailure(msg.into()))
}

fn integer(x: f64) -> Result<i128, ExecutionFailure> {
    if x.fract() == 0.0 && x.abs() < 1e18 {
        Ok(x as i128)
    } else {
        fail(format!("{x} is not an integer"))
    }
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn falling_factorial(n: i128, k: i128) -> Result<f64, ExecutionFailure> {
    if n < 0 || k < 0 || k > n {
        return fail(format!("invalid arguments ({n}, {k})"));
    }
    Ok(((n - k + 1)..=n).map(|v| v as f64).product())
}

pub fn arithmetic(op: &str, xs: &[f64]) -> Result<f64, ExecutionFailure> {
    let arity = |n: usize| -> Result<(), ExecutionFailure> {
        if xs.len() == n {
            Ok(())
        } else {
            fail(format!("`{op}` takes {n} numbers, got {}", xs.len()))
        }
    };
    if xs.is_empty() {
        return fail("input is empty");
    }
    let v = match op {
        "add_" => xs.iter().sum(),
        "subtract_" => xs[0] - xs[1..].iter().sum::<f64>(),
        "multiply_" => xs.iter().product(),
        "divide_" => {
            let mut acc = xs[0];
            for &d in &xs[1..] {
                if d == 0.0 {
                    return fail("division by zero");
                }
                acc /= d;
            }
            acc
        }
        "power_" => {
            arity(2)?;
            xs[0].powf(xs[1])
        }
        "sqrt_" => {
            arity(1)?;
            if xs[0] < 0.0 {
                return fail("square root of a negative number");
            }
            xs[0].sqrt()
        }
        "log_" => {
            if xs[0] <= 0.0 {
                return fail("logarithm of a non-positive number");
            }
            match xs {
                [x] => x.log10(),
                [x, base] if *base > 0.0 && *base != 1.0 => x.log(*base),
                [_, _] => return fail("invalid logarithm base"),
                _ => return fail("`log_` takes 1 or 2 numbers"),
            }
        }
        "ln_" => {
            arity(1)?;
            if xs[0] <= 0.0 {
                return fail("logarithm of a non-positive number");
            }
            xs[0].ln()
        }
        "gcd_" | "lcm_" => {
            let ints = xs.iter().map(|&x| integer(x)).collect::<Result<Vec<_>, _>>()?;
            let folded = if op == "gcd_" {
                ints.iter().copied().fold(0, gcd)
            } else {
                ints.iter().copied().try_fold(1i128, |acc, x| {
                    if x == 0 {
                        return Ok(0);
                    }
                    let g = gcd(acc, x);
                    if g == 0 {
                        return Ok(0);
                    }
                    (acc / g).checked_mul(x.abs()).ok_or(ExecutionFailure("overflow".into()))
                })?
            };
            folded as f64
        }
        "remainder_" => {
            arity(2)?;
            if xs[1] == 0.0 {
                return fail("division by zero");
            }
            xs[0] % xs[1]
        }
        "choose_" => {
            arity(2)?;
            let (n, k) = (integer(xs[0])?, integer(xs[1])?);
            let perm = falling_factorial(n, k)?;
            perm / falling_factorial(k, k)?
        }
        "permutate_" => {
            arity(2)?;
            falling_factorial(integer(xs[0])?, integer(xs[1])?)?
        }
        other => return fail(format!("unknown operation `{other}`")),
    };
    if v.is_finite() {
        Ok(v)
    } else {
        fail("result is not finite")
    }
}

impl ToolLookup for ArithmeticExecutor {
    fn lookup(&self, tool_id: &str, function_name: &str) -> Option<&FunctionSpec> {
        self.registry.lookup(tool_id, function_name)
    }
}

impl ToolExecutor for ArithmeticExecutor {
    fn execute(&self, call: &ToolCall) -> Result<String, ExecutionFailure> {
        if self.lookup(&call.tool_id, &call.function_name).is_none() {
            return fail(format!("unknown function `{}`", call.function_name));
        }
        let Some(Value::Array(items)) = call.arguments.get("input") else {
            return fail("`input` must be a list of numbers");
        };
        let xs = items
            .iter()
            .map(|v| v.as_f64().ok_or(ExecutionFailure(format!("{v} is not a number"))))
            .collect::<Result<Vec<_>, _>>()?;
        arithmetic(&call.function_name, &xs).map(|v| format!("{v:.2}"))
    }
}

/// Canned result of one function in a [`StaticExecutor`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticResponse {
    Ok(String),
    Fail(String),
}

/// Executor that answers from a fixed table, for synthetic inventories.
/// Unlisted functions of registered tools return `"ok"`.
#[derive(Debug, Clone, Default)]
pub struct StaticExecutor {
    registry: ToolRegistry,
    responses: HashMap<(String, String), StaticResponse>,
}

#[derive(Deserialize)]
struct StaticEntry {
    tool: String,
    function: String,
    #[serde(flatten)]
    response: StaticResponse,
}

impl StaticExecutor {
    pub fn new(registry: ToolRegistry) -> Self {
        Self {
            registry,
            responses: HashMap::new(),
        }
    }

    pub fn respond(mut self, tool: &str, function: &str, response: StaticResponse) -> Self {
        self.responses
            .insert((tool.to_string(), function.to_string()), response);
        self
    }

    /// Load responses from JSON: `[{"tool": .., "function": .., "ok": ".."}, ...]`.
    pub fn with_responses_json(mut self, text: &str) -> Result<Self, serde_json::Error> {
        let entries: Vec<StaticEntry> = serde_json::from_str(text)?;
        for e in entries {
            self.responses.insert((e.tool, e.function), e.response);
        }
        Ok(self)
    }

    pub fn registry(&self) -> &ToolRegistry {
        &self.registry
    }
}

impl ToolLookup for StaticExecutor {
    fn lookup(&self, tool_id: &str, function_name: &str) -> Option<&FunctionSpec> {
        self.registry.lookup(tool_id, function_name)
    }
}

impl ToolExecutor for StaticExecutor {
    fn execute(&self, call: &ToolCall) -> Result<String, ExecutionFailure> {
        if self.lookup(&call.tool_id, &call.function_name).is_none() {
            return fail(format!("unknown function `{}`", call.function_name));
        }
        match self
            .responses
            .get(&(call.tool_id.clone(), call.function_name.clone()))
        {
            Some(StaticResponse::Ok(s)) => Ok(s.clone()),
            Some(StaticResponse::Fail(s)) => fail(s.clone()),
            None => Ok("ok".into()),
        }
    }
}
