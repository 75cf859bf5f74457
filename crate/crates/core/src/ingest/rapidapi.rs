//! RapidAPI-hub style JSON documents.

use std::collections::HashSet;

use indexmap::IndexMap;
use serde_json::{Map, Value};

use super::{
    log_warnings, FunctionSpec, IngestError, IngestWarning, ParameterSpec, SourceFormat,
    ToolDocumentation, ValueType,
};

const TOOL_NAME_KEYS: [&str; 3] = ["tool_name", "name", "title"];
const FUNCTION_NAME_KEYS: [&str; 2] = ["name", "api_name"];

/// Parse a RapidAPI-shaped document. Fields the schema does not model are
/// kept verbatim in `raw_extras`; function-level ones are keyed
/// `api_list[i].<field>`.
pub fn parse_rapidapi(raw_text: &str) -> Result<ToolDocumentation, IngestError> {
    let mut warnings = Vec::new();
    let doc = parse(raw_text, &mut warnings)?;
    doc.validate()?;
    log_warnings(&warnings);
    Ok(doc)
}

fn extra_string(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn first_str<'a>(obj: &'a Map<String, Value>, keys: &[&'static str]) -> Option<(&'static str, &'a str)> {
    keys.iter()
        .find_map(|k| obj.get(*k).and_then(Value::as_str).map(|v| (*k, v)))
        .filter(|(_, v)| !v.trim().is_empty())
}

pub(super) fn parse(
    raw_text: &str,
    warnings: &mut Vec<IngestWarning>,
) -> Result<ToolDocumentation, IngestError> {
    let value: Value =
        serde_json::from_str(raw_text).map_err(|e| IngestError::Malformed(e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(IngestError::Malformed("top level is not an object".into()));
    };

    let (name_key, tool_name) =
        first_str(&obj, &TOOL_NAME_KEYS).ok_or_else(|| IngestError::MissingField("tool_name".into()))?;
    let tool_name = tool_name.to_string();
    let tool_description = obj
        .get("tool_description")
        .map(extra_string)
        .unwrap_or_default();

    let api_list = match obj.get("api_list") {
        Some(Value::Array(list)) if !list.is_empty() => list,
        Some(Value::Array(_)) | None => return Err(IngestError::MissingField("api_list".into())),
        Some(_) => return Err(IngestError::Malformed("`api_list` is not an array".into())),
    };

    let mut raw_extras = IndexMap::new();
    for (k, v) in &obj {
        if k == name_key || k == "tool_description" || k == "api_list" {
            continue;
        }
        raw_extras.insert(k.clone(), extra_string(v));
    }

    let mut functions = Vec::with_capacity(api_list.len());
    let mut seen = HashSet::new();
    for (i, api) in api_list.iter().enumerate() {
        let Value::Object(api) = api else {
            return Err(IngestError::Malformed(format!("api_list[{i}] is not an object")));
        };
        let (fname_key, fname) = first_str(api, &FUNCTION_NAME_KEYS)
            .ok_or_else(|| IngestError::MissingField(format!("api_list[{i}].name")))?;
        if !seen.insert(fname.to_string()) {
            return Err(IngestError::Malformed(format!(
                "duplicate api name `{fname}`"
            )));
        }
        let required = parse_params(api.get("required_parameters"), fname, "required_parameters", warnings)?;
        let optional = parse_params(api.get("optional_parameters"), fname, "optional_parameters", warnings)?;
        for (k, v) in api {
            if k == fname_key
                || k == "description"
                || k == "required_parameters"
                || k == "optional_parameters"
            {
                continue;
            }
            raw_extras.insert(format!("api_list[{i}].{k}"), extra_string(v));
        }
        functions.push(FunctionSpec {
            name: fname.to_string(),
            description: api.get("description").map(extra_string).unwrap_or_default(),
            required_parameters: required,
            optional_parameters: optional,
            invocation_template: None,
        });
    }

    Ok(ToolDocumentation {
        tool_name,
        tool_description,
        source_format: SourceFormat::RapidApiJson,
        functions,
        raw_extras,
    })
}

fn parse_params(
    value: Option<&Value>,
    function: &str,
    field: &str,
    warnings: &mut Vec<IngestWarning>,
) -> Result<Vec<ParameterSpec>, IngestError> {
    let list = match value {
        None | Some(Value::Null) => return Ok(Vec::new()),
        Some(Value::Array(list)) => list,
        Some(_) => {
            return Err(IngestError::Malformed(format!(
                "`{field}` of `{function}` is not an array"
            )))
        }
    };
    let mut out = Vec::with_capacity(list.len());
    for p in list {
        let Value::Object(p) = p else {
            return Err(IngestError::Malformed(format!(
                "parameter of `{function}` is not an object"
            )));
        };
        let name = p
            .get("name")
            .and_then(Value::as_str)
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| IngestError::MissingField(format!("{function}.{field}[].name")))?;
        let type_name = p.get("type").and_then(Value::as_str).unwrap_or("STRING");
        let value_type = ValueType::from_alias(type_name).unwrap_or_else(|| {
            warnings.push(IngestWarning {
                function: function.to_string(),
                parameter: Some(name.to_string()),
                message: format!("unknown type `{type_name}` treated as STRING"),
            });
            ValueType::String
        });
        let default = match p.get("default") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) if s.is_empty() && value_type != ValueType::String => None,
            Some(d) => match value_type.coerce(d) {
                Some(v) => Some(v),
                None => {
                    warnings.push(IngestWarning {
                        function: function.to_string(),
                        parameter: Some(name.to_string()),
                        message: format!("default {d} does not conform to {value_type}; dropped"),
                    });
                    None
                }
            },
        };
        out.push(ParameterSpec {
            name: name.to_string(),
            value_type,
            description: p.get("description").map(extra_string).unwrap_or_default(),
            default,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn doc(api_list: Value) -> String {
        json!({
            "tool_name": "T",
            "tool_description": "d",
            "api_list": api_list,
        })
        .to_string()
    }

    #[test]
    fn empty_api_list_is_missing() {
        assert_eq!(
            parse_rapidapi(&doc(json!([]))),
            Err(IngestError::MissingField("api_list".into()))
        );
        assert_eq!(
            parse_rapidapi(r#"{"tool_name": "T"}"#),
            Err(IngestError::MissingField("api_list".into()))
        );
    }

    #[test]
    fn missing_name_is_missing_field() {
        let text = json!({"api_list": [{"name": "a"}]}).to_string();
        assert_eq!(
            parse_rapidapi(&text),
            Err(IngestError::MissingField("tool_name".into()))
        );
    }

    #[test]
    fn duplicate_api_names_are_malformed() {
        let err = parse_rapidapi(&doc(json!([{"name": "a"}, {"name": "a"}]))).unwrap_err();
        assert!(matches!(err, IngestError::Malformed(_)));
    }

    #[test]
    fn broken_json_is_malformed() {
        assert!(matches!(
            parse_rapidapi("{\"tool_name\": "),
            Err(IngestError::Malformed(_))
        ));
    }

    #[test]
    fn api_name_alias_and_unknown_type() {
        let text = doc(json!([{
            "api_name": "lookup",
            "required_parameters": [{"name": "when", "type": "DATE (YYYY-MM-DD)", "default": "2020-01-01"}],
            "optional_parameters": [{"name": "n", "type": "NUMBER", "default": ""}]
        }]));
        let (d, warnings) =
            super::super::parse_with_warnings(&text, SourceFormat::RapidApiJson).unwrap();
        let f = &d.functions[0];
        assert_eq!(f.name, "lookup");
        assert_eq!(f.required_parameters[0].value_type, ValueType::String);
        assert_eq!(f.required_parameters[0].default, Some(json!("2020-01-01")));
        assert_eq!(f.optional_parameters[0].default, None);
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].parameter.as_deref(), Some("when"));
    }

    #[test]
    fn nonconforming_default_dropped_with_warning() {
        let text = doc(json!([{
            "name": "a",
            "required_parameters": [{"name": "n", "type": "NUMBER", "default": "many"}]
        }]));
        let (d, warnings) =
            super::super::parse_with_warnings(&text, SourceFormat::RapidApiJson).unwrap();
        assert_eq!(d.functions[0].required_parameters[0].default, None);
        assert_eq!(warnings.len(), 1);
    }
}
