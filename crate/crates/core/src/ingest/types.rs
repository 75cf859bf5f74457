use std::collections::HashSet;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use super::IngestError;

/// Where a [`ToolDocumentation`] was parsed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SourceFormat {
    RapidApiJson,
    RestEndpointCatalog,
    BareFunction,
}

impl fmt::Display for SourceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SourceFormat::RapidApiJson => "RapidApiJson",
            SourceFormat::RestEndpointCatalog => "RestEndpointCatalog",
            SourceFormat::BareFunction => "BareFunction",
        };
        f.write_str(s)
    }
}

/// Parameter value types. Serialized in the upper-case RapidAPI spelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueType {
    String,
    Number,
    Boolean,
    List,
    Object,
}

impl ValueType {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueType::String => "STRING",
            ValueType::Number => "NUMBER",
            ValueType::Boolean => "BOOLEAN",
            ValueType::List => "LIST",
            ValueType::Object => "OBJECT",
        }
    }

    /// Resolve a type name from any of the corpora we ingest. Case-insensitive.
    pub fn from_alias(name: &str) -> Option<Self> {
        let lower = name.trim().to_ascii_lowercase();
        let ty = match lower.as_str() {
            "string" | "str" | "text" => ValueType::String,
            "number" | "integer" | "int" | "float" | "double" | "num" | "decimal" => {
                ValueType::Number
            }
            "boolean" | "bool" => ValueType::Boolean,
            "list" | "array" | "sequence" | "tuple" => ValueType::List,
            "object" | "dict" | "map" | "json" => ValueType::Object,
            _ => {
                // `List[int]`, `Array<number>`, `Dict[str, int]` and friends.
                let head: String = lower
                    .chars()
                    .take_while(|c| c.is_ascii_alphabetic())
                    .collect();
                if head.len() == lower.len() {
                    return None;
                }
                return Self::from_alias(&head);
            }
        };
        Some(ty)
    }

    /// Whether `value` is an instance of this type.
    pub fn accepts(self, value: &Value) -> bool {
        match self {
            ValueType::String => value.is_string(),
            ValueType::Number => value.is_number(),
            ValueType::Boolean => value.is_boolean(),
            ValueType::List => value.is_array(),
            ValueType::Object => value.is_object(),
        }
    }

    /// Best-effort conversion of a source default into this type. RapidAPI
    /// corpora carry every default as a string.
    pub fn coerce(self, value: &Value) -> Option<Value> {
        if self.accepts(value) {
            return Some(value.clone());
        }
        let text = value.as_str()?.trim();
        match self {
            ValueType::String => None,
            ValueType::Number => {
                if let Ok(i) = text.parse::<i64>() {
                    Some(Value::from(i))
                } else if let Ok(u) = text.parse::<u64>() {
                    Some(Value::from(u))
                } else {
                    let f = text.parse::<f64>().ok()?;
                    serde_json::Number::from_f64(f).map(Value::Number)
                }
            }
            ValueType::Boolean => match text.to_ascii_lowercase().as_str() {
                "true" => Some(Value::Bool(true)),
                "false" => Some(Value::Bool(false)),
                _ => None,
            },
            ValueType::List | ValueType::Object => {
                let parsed: Value = serde_json::from_str(text).ok()?;
                self.accepts(&parsed).then_some(parsed)
            }
        }
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for ValueType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ValueType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        ValueType::from_alias(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown parameter type `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub value_type: ValueType,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
}

impl ParameterSpec {
    pub fn new(name: impl Into<String>, value_type: ValueType) -> Self {
        Self {
            name: name.into(),
            value_type,
            description: String::new(),
            default: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub required_parameters: Vec<ParameterSpec>,
    #[serde(default)]
    pub optional_parameters: Vec<ParameterSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invocation_template: Option<String>,
}

/// Why a set of call arguments does not fit a [`FunctionSpec`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArgumentViolation {
    MissingRequired(String),
    UnknownKey(String),
    TypeMismatch { name: String, expected: ValueType },
}

impl fmt::Display for ArgumentViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgumentViolation::MissingRequired(n) => write!(f, "missing required parameter `{n}`"),
            ArgumentViolation::UnknownKey(n) => write!(f, "unknown parameter `{n}`"),
            ArgumentViolation::TypeMismatch { name, expected } => {
                write!(f, "parameter `{name}` must be of type {expected}")
            }
        }
    }
}

impl FunctionSpec {
    pub fn parameters(&self) -> impl Iterator<Item = &ParameterSpec> {
        self.required_parameters
            .iter()
            .chain(self.optional_parameters.iter())
    }

    pub fn parameter(&self, name: &str) -> Option<&ParameterSpec> {
        self.parameters().find(|p| p.name == name)
    }

    pub fn has_parameters(&self) -> bool {
        !self.required_parameters.is_empty() || !self.optional_parameters.is_empty()
    }

    /// Check call arguments: every key is declared, every value has the
    /// declared type, and every required parameter is present. A default on a
    /// required parameter is a sample value and does not make it optional.
    /// Returns all violations in declaration order.
    pub fn check_arguments(&self, args: &serde_json::Map<String, Value>) -> Vec<ArgumentViolation> {
        let mut out = Vec::new();
        for p in &self.required_parameters {
            if !args.contains_key(&p.name) {
                out.push(ArgumentViolation::MissingRequired(p.name.clone()));
            }
        }
        for (key, value) in args {
            match self.parameter(key) {
                None => out.push(ArgumentViolation::UnknownKey(key.clone())),
                Some(p) if !p.value_type.accepts(value) => {
                    out.push(ArgumentViolation::TypeMismatch {
                        name: key.clone(),
                        expected: p.value_type,
                    })
                }
                Some(_) => {}
            }
        }
        out
    }

    pub(crate) fn validate(&self) -> Result<(), IngestError> {
        if self.name.trim().is_empty() {
            return Err(IngestError::Malformed("function with empty name".into()));
        }
        let mut seen = HashSet::new();
        for p in self.parameters() {
            if p.name.trim().is_empty() {
                return Err(IngestError::Malformed(format!(
                    "function `{}` has a parameter with an empty name",
                    self.name
                )));
            }
            if !seen.insert(p.name.as_str()) {
                return Err(IngestError::Malformed(format!(
                    "function `{}` declares parameter `{}` twice",
                    self.name, p.name
                )));
            }
            if let Some(d) = &p.default {
                if !p.value_type.accepts(d) {
                    return Err(IngestError::Malformed(format!(
                        "default of `{}` does not conform to {}",
                        p.name, p.value_type
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Normalized documentation of one tool, whatever its source format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDocumentation {
    pub tool_name: String,
    #[serde(default)]
    pub tool_description: String,
    pub source_format: SourceFormat,
    pub functions: Vec<FunctionSpec>,
    #[serde(default)]
    pub raw_extras: IndexMap<String, String>,
}

impl ToolDocumentation {
    pub fn function(&self, name: &str) -> Option<&FunctionSpec> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn parameter_count(&self) -> usize {
        self.functions
            .iter()
            .map(|f| f.required_parameters.len() + f.optional_parameters.len())
            .sum()
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.tool_name.trim().is_empty() {
            return Err(IngestError::MissingField("tool_name".into()));
        }
        if self.functions.is_empty() {
            return Err(IngestError::MissingField("functions".into()));
        }
        let mut seen = HashSet::new();
        for f in &self.functions {
            f.validate()?;
            if !seen.insert(f.name.as_str()) {
                return Err(IngestError::Malformed(format!(
                    "function `{}` is declared twice",
                    f.name
                )));
            }
            if self.source_format == SourceFormat::BareFunction && f.invocation_template.is_none()
            {
                return Err(IngestError::Malformed(format!(
                    "bare function `{}` has no calling signature",
                    f.name
                )));
            }
        }
        Ok(())
    }
}
