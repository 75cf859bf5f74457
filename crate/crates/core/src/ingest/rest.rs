//! REST endpoint catalogs.
//!
//! ```text
//! # TMDB
//! > Movie and TV metadata.
//! GET /tv/latest: Get the most newly created TV show.
//! GET /person/{person_id}/tv_credits: Get the TV show credits for a person.
//! ```
//!
//! The optional `#` line names the tool and `>` lines describe it. Each entry
//! is a verb, a path, and a one-line description, optionally separated from
//! the path by `:` or `-`. Path placeholders become required string
//! parameters.

use std::collections::HashMap;

use indexmap::IndexSet;

use super::{
    header_description, header_name, log_warnings, significant_lines, FunctionSpec, IngestError,
    IngestWarning, ParameterSpec, SourceFormat, ToolDocumentation, ValueType, HTTP_VERBS,
};

const DEFAULT_TOOL_NAME: &str = "rest_api";

pub fn parse_rest_catalog(raw_text: &str) -> Result<ToolDocumentation, IngestError> {
    let mut warnings = Vec::new();
    let doc = parse(raw_text, &mut warnings)?;
    doc.validate()?;
    log_warnings(&warnings);
    Ok(doc)
}

struct Entry {
    verb: String,
    path: String,
    description: String,
}

/// `{name}` placeholders in order of first appearance, each once.
pub(crate) fn placeholders(path: &str) -> Result<IndexSet<String>, IngestError> {
    let mut out = IndexSet::new();
    let mut rest = path;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| IngestError::Malformed(format!("unclosed placeholder in `{path}`")))?;
        let name = after[..close].trim();
        if name.is_empty() || name.contains('{') {
            return Err(IngestError::Malformed(format!("bad placeholder in `{path}`")));
        }
        out.insert(name.to_string());
        rest = &after[close + 1..];
    }
    if rest.contains('}') {
        return Err(IngestError::Malformed(format!("stray `}}` in `{path}`")));
    }
    Ok(out)
}

fn parse_entry(line_no: usize, line: &str) -> Result<Entry, IngestError> {
    let mut parts = line.splitn(2, char::is_whitespace);
    let verb = parts.next().unwrap_or_default();
    let rest = parts.next().unwrap_or_default().trim_start();
    let upper = verb.to_ascii_uppercase();
    if !HTTP_VERBS.contains(&upper.as_str()) {
        return Err(IngestError::Malformed(format!(
            "line {line_no}: entry does not start with an HTTP method: `{line}`"
        )));
    }
    let path_end = rest.find(char::is_whitespace).unwrap_or(rest.len());
    let mut path = &rest[..path_end];
    let mut description = rest[path_end..].trim();
    if let Some(p) = path.strip_suffix(':') {
        path = p;
    }
    if !path.starts_with('/') {
        return Err(IngestError::Malformed(format!(
            "line {line_no}: `{verb}` is not followed by a path"
        )));
    }
    for sep in [":", "-", "\u{2014}"] {
        if let Some(d) = description.strip_prefix(sep) {
            description = d.trim();
            break;
        }
    }
    Ok(Entry {
        verb: upper,
        path: path.to_string(),
        description: description.to_string(),
    })
}

pub(super) fn parse(
    raw_text: &str,
    _warnings: &mut Vec<IngestWarning>,
) -> Result<ToolDocumentation, IngestError> {
    let entries = significant_lines(raw_text)
        .map(|(n, l)| parse_entry(n, l))
        .collect::<Result<Vec<_>, _>>()?;
    if entries.is_empty() {
        return Err(IngestError::Malformed("catalog has no endpoints".into()));
    }

    // A path served by several verbs gets the verb in its function name.
    let mut per_path: HashMap<&str, usize> = HashMap::new();
    for e in &entries {
        *per_path.entry(e.path.as_str()).or_default() += 1;
    }

    let mut functions = Vec::with_capacity(entries.len());
    for e in &entries {
        let template = format!("{} {}", e.verb, e.path);
        let name = if per_path[e.path.as_str()] > 1 {
            template.clone()
        } else {
            e.path.clone()
        };
        let required_parameters = placeholders(&e.path)?
            .into_iter()
            .map(|p| ParameterSpec {
                description: format!("path parameter `{p}`"),
                ..ParameterSpec::new(p, ValueType::String)
            })
            .collect();
        functions.push(FunctionSpec {
            name,
            description: e.description.clone(),
            required_parameters,
            optional_parameters: Vec::new(),
            invocation_template: Some(template),
        });
    }

    Ok(ToolDocumentation {
        tool_name: header_name(raw_text).unwrap_or_else(|| DEFAULT_TOOL_NAME.to_string()),
        tool_description: header_description(raw_text),
        source_format: SourceFormat::RestEndpointCatalog,
        functions,
        raw_extras: Default::default(),
    })
}
