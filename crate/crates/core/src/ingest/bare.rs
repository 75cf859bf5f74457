//! Bare calling signatures, one per line: `name(param: Type, other: Type = 1) -> Ret`.
//! Only the name and calling form are known; descriptions stay empty.

use std::sync::OnceLock;

use regex::Regex;
use serde_json::Value;

use super::{
    header_description, header_name, log_warnings, significant_lines, FunctionSpec, IngestError,
    IngestWarning, ParameterSpec, SourceFormat, ToolDocumentation, ValueType,
};

fn signature_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)\s*(?:->\s*(\S.*))?$").unwrap()
    })
}

pub(super) fn is_signature(line: &str) -> bool {
    signature_re().is_match(line.trim())
}

pub fn parse_bare_function(raw_text: &str) -> Result<ToolDocumentation, IngestError> {
    let mut warnings = Vec::new();
    let doc = parse(raw_text, &mut warnings)?;
    doc.validate()?;
    log_warnings(&warnings);
    Ok(doc)
}

/// Split on commas that are not nested inside brackets.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '[' | '(' | '{' | '<' => depth += 1,
            ']' | ')' | '}' | '>' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out.into_iter().map(str::trim).filter(|p| !p.is_empty()).collect()
}

fn parse_default(text: &str, ty: ValueType) -> Option<Value> {
    let text = text.trim();
    let as_json: Value = serde_json::from_str(text)
        .or_else(|_| serde_json::from_str(&text.replace('\'', "\"")))
        .unwrap_or_else(|_| Value::String(text.to_string()));
    match as_json {
        Value::String(s) if ty == ValueType::String => Some(Value::String(s)),
        v => ty.coerce(&v),
    }
}

fn parse_line(
    line_no: usize,
    line: &str,
    warnings: &mut Vec<IngestWarning>,
) -> Result<FunctionSpec, IngestError> {
    let caps = signature_re().captures(line).ok_or_else(|| {
        IngestError::Malformed(format!("line {line_no}: not a function signature: `{line}`"))
    })?;
    let name = caps[1].to_string();
    let mut required = Vec::new();
    let mut optional = Vec::new();
    for raw in split_top_level(&caps[2]) {
        let (head, default) = match raw.split_once('=') {
            Some((h, d)) => (h.trim(), Some(d)),
            None => (raw, None),
        };
        let (pname, type_name) = match head.split_once(':') {
            Some((n, t)) => (n.trim(), Some(t.trim())),
            None => (head.trim(), None),
        };
        let star = pname.starts_with('*');
        let pname = pname.trim_start_matches('*');
        if pname.is_empty() || !pname.chars().all(|c| c.is_alphanumeric() || c == '_') {
            return Err(IngestError::Malformed(format!(
                "line {line_no}: bad parameter `{raw}`"
            )));
        }
        let mut is_optional = default.is_some();
        let value_type = match type_name {
            None if star => ValueType::List,
            None => ValueType::String,
            Some(t) => {
                let inner = t
                    .strip_prefix("Optional[")
                    .and_then(|s| s.strip_suffix(']'))
                    .inspect(|_| is_optional = true)
                    .unwrap_or(t);
                ValueType::from_alias(inner).unwrap_or_else(|| {
                    warnings.push(IngestWarning {
                        function: name.clone(),
                        parameter: Some(pname.to_string()),
                        message: format!("unknown type `{inner}` treated as STRING"),
                    });
                    ValueType::String
                })
            }
        };
        let mut spec = ParameterSpec::new(pname, value_type);
        if let Some(d) = default {
            spec.default = parse_default(d, value_type);
            if spec.default.is_none() && d.trim() != "None" {
                warnings.push(IngestWarning {
                    function: name.clone(),
                    parameter: Some(pname.to_string()),
                    message: format!("default `{}` does not conform to {value_type}; dropped", d.trim()),
                });
            }
        }
        if is_optional {
            optional.push(spec);
        } else {
            required.push(spec);
        }
    }
    Ok(FunctionSpec {
        name,
        description: String::new(),
        required_parameters: required,
        optional_parameters: optional,
        invocation_template: Some(line.to_string()),
    })
}

pub(super) fn parse(
    raw_text: &str,
    warnings: &mut Vec<IngestWarning>,
) -> Result<ToolDocumentation, IngestError> {
    let functions = significant_lines(raw_text)
        .map(|(n, l)| parse_line(n, l, warnings))
        .collect::<Result<Vec<_>, _>>()?;
    let tool_name = match (header_name(raw_text), functions.as_slice()) {
        (Some(h), _) => h,
        (None, [only]) => only.name.clone(),
        (None, [_, ..]) => "functions".to_string(),
        (None, []) => return Err(IngestError::Malformed("no function signatures".into())),
    };
    Ok(ToolDocumentation {
        tool_name,
        tool_description: header_description(raw_text),
        source_format: SourceFormat::BareFunction,
        functions,
        raw_extras: Default::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn single_list_parameter() {
        let d = parse_bare_function("add_(input: List)").unwrap();
        assert_eq!(d.tool_name, "add_");
        let f = &d.functions[0];
        assert_eq!(f.name, "add_");
        assert_eq!(f.description, "");
        assert_eq!(f.required_parameters, vec![ParameterSpec::new("input", ValueType::List)]);
        assert_eq!(f.invocation_template.as_deref(), Some("add_(input: List)"));
    }

    #[test]
    fn return_type_and_defaults() {
        let d = parse_bare_function(
            "round_(x: float, digits: int = 2, mode: str = 'half') -> Number",
        )
        .unwrap();
        let f = &d.functions[0];
        assert_eq!(f.required_parameters.len(), 1);
        assert_eq!(f.optional_parameters.len(), 2);
        assert_eq!(f.optional_parameters[0].default, Some(json!(2)));
        assert_eq!(f.optional_parameters[1].default, Some(json!("half")));
    }

    #[test]
    fn nested_generic_types_split_correctly() {
        let d = parse_bare_function("f(a: Dict[str, int], b: Optional[List])").unwrap();
        let f = &d.functions[0];
        assert_eq!(f.required_parameters[0].value_type, ValueType::Object);
        assert_eq!(f.optional_parameters[0].name, "b");
        assert_eq!(f.optional_parameters[0].value_type, ValueType::List);
    }

    #[test]
    fn empty_and_garbage_inputs() {
        assert!(matches!(parse_bare_function(""), Err(IngestError::Malformed(_))));
        assert!(matches!(
            parse_bare_function("add_(input: List)\nthis is prose"),
            Err(IngestError::Malformed(_))
        ));
    }

    #[test]
    fn multiple_lines_with_header() {
        let d = parse_bare_function("# FuncQA\n> arithmetic\nadd_(input: List)\nsubtract_(input: List)")
            .unwrap();
        assert_eq!(d.tool_name, "FuncQA");
        assert_eq!(d.tool_description, "arithmetic");
        assert_eq!(d.functions[1].name, "subtract_");
    }
}
