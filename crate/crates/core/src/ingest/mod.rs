//! Parsing heterogeneous tool documentation into one normalized schema.
//!
//! Three source shapes are understood:
//!
//! * RapidAPI-style JSON documents (`tool_name`, `api_list`, per-function
//!   `required_parameters` / `optional_parameters`),
//! * REST endpoint catalogs, one `METHOD /path description` entry per line,
//! * bare function signatures such as `add_(input: List) -> Number`.
//!
//! Everything ends up as a [`ToolDocumentation`], which serializes to a
//! canonical JSON form that [`parse_canonical`] reads back losslessly.

mod bare;
mod rapidapi;
mod rest;
mod types;

use serde_json::Value;
use thiserror::Error;

pub use bare::parse_bare_function;
pub use rapidapi::parse_rapidapi;
pub use rest::parse_rest_catalog;
pub use types::{
    ArgumentViolation, FunctionSpec, ParameterSpec, SourceFormat, ToolDocumentation, ValueType,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("input matches no known documentation format")]
    UnrecognizedFormat,
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("missing field `{0}`")]
    MissingField(String),
}

/// Something the parser had to work around without rejecting the document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestWarning {
    pub function: String,
    pub parameter: Option<String>,
    pub message: String,
}

pub(crate) const HTTP_VERBS: [&str; 7] = ["GET", "POST", "PUT", "PATCH", "DELETE", "HEAD", "OPTIONS"];

/// Lines that carry entries; `#` headers and `>` description lines are not entries.
pub(crate) fn significant_lines(raw: &str) -> impl Iterator<Item = (usize, &str)> {
    raw.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#') && !l.starts_with('>'))
}

/// Text of the first `# name` header line, if any.
pub(crate) fn header_name(raw: &str) -> Option<String> {
    raw.lines()
        .map(str::trim)
        .find(|l| l.starts_with('#'))
        .map(|l| l.trim_start_matches('#').trim().to_string())
        .filter(|s| !s.is_empty())
}

/// Joined `> ...` description lines.
pub(crate) fn header_description(raw: &str) -> String {
    raw.lines()
        .map(str::trim)
        .filter_map(|l| l.strip_prefix('>'))
        .map(str::trim)
        .collect::<Vec<_>>()
        .join(" ")
}

fn starts_with_verb(line: &str) -> bool {
    let mut parts = line.split_whitespace();
    match (parts.next(), parts.next()) {
        (Some(verb), Some(path)) => {
            HTTP_VERBS.contains(&verb.to_ascii_uppercase().as_str()) && path.starts_with('/')
        }
        _ => false,
    }
}

/// Decide which parser applies. Structural JSON checks run first, then the
/// HTTP-verb prefix, then the signature pattern.
pub fn detect_format(raw_text: &str) -> Result<SourceFormat, IngestError> {
    if raw_text.trim().is_empty() {
        return Err(IngestError::UnrecognizedFormat);
    }
    if let Ok(Value::Object(obj)) = serde_json::from_str::<Value>(raw_text) {
        if obj.contains_key("api_list") || obj.contains_key("tool_name") {
            return Ok(SourceFormat::RapidApiJson);
        }
        return Err(IngestError::UnrecognizedFormat);
    }
    let Some((_, first)) = significant_lines(raw_text).next() else {
        return Err(IngestError::UnrecognizedFormat);
    };
    if starts_with_verb(first) {
        return Ok(SourceFormat::RestEndpointCatalog);
    }
    if bare::is_signature(first) {
        return Ok(SourceFormat::BareFunction);
    }
    Err(IngestError::UnrecognizedFormat)
}

/// Parse with an explicit format and return any warnings raised on the way.
pub fn parse_with_warnings(
    raw_text: &str,
    format: SourceFormat,
) -> Result<(ToolDocumentation, Vec<IngestWarning>), IngestError> {
    let mut warnings = Vec::new();
    let doc = match format {
        SourceFormat::RapidApiJson => rapidapi::parse(raw_text, &mut warnings)?,
        SourceFormat::RestEndpointCatalog => rest::parse(raw_text, &mut warnings)?,
        SourceFormat::BareFunction => bare::parse(raw_text, &mut warnings)?,
    };
    doc.validate()?;
    Ok((doc, warnings))
}

pub(crate) fn log_warnings(warnings: &[IngestWarning]) {
    for w in warnings {
        match &w.parameter {
            Some(p) => log::warn!("{} / {}: {}", w.function, p, w.message),
            None => log::warn!("{}: {}", w.function, w.message),
        }
    }
}

/// Canonical JSON for a document, pretty-printed, keys in schema order.
pub fn serialize_doc(doc: &ToolDocumentation) -> String {
    serde_json::to_string_pretty(doc).expect("documentation always serializes")
}

/// Canonical JSON on a single line, for JSONL corpora.
pub fn serialize_doc_line(doc: &ToolDocumentation) -> String {
    serde_json::to_string(doc).expect("documentation always serializes")
}

/// Read the canonical form produced by [`serialize_doc`].
pub fn parse_canonical(text: &str) -> Result<ToolDocumentation, IngestError> {
    let doc: ToolDocumentation =
        serde_json::from_str(text).map_err(|e| IngestError::Malformed(e.to_string()))?;
    doc.validate()?;
    Ok(doc)
}

fn is_canonical(value: &Value) -> bool {
    value
        .as_object()
        .is_some_and(|o| o.contains_key("source_format") && o.contains_key("functions"))
}

/// Whether a JSON line is a file header record rather than data.
pub fn is_header_record(value: &Value) -> bool {
    value.as_object().is_some_and(|o| o.contains_key("header"))
}

/// Read one document: canonical JSON is recognized first, anything else is
/// parsed with `format` or, when `None`, the detected format.
pub fn read_document(
    raw_text: &str,
    format: Option<SourceFormat>,
) -> Result<ToolDocumentation, IngestError> {
    if let Ok(value) = serde_json::from_str::<Value>(raw_text) {
        if is_canonical(&value) {
            return parse_canonical(raw_text);
        }
    }
    let format = match format {
        Some(f) => f,
        None => detect_format(raw_text)?,
    };
    let (doc, warnings) = parse_with_warnings(raw_text, format)?;
    log_warnings(&warnings);
    Ok(doc)
}

/// Read a whole file: either a single document or a JSONL corpus with one
/// document per line. Header records are skipped.
pub fn read_corpus(
    text: &str,
    format: Option<SourceFormat>,
) -> Result<Vec<ToolDocumentation>, IngestError> {
    if serde_json::from_str::<Value>(text).is_ok() || format.is_some_and(|f| f != SourceFormat::RapidApiJson)
    {
        return read_document(text, format).map(|d| vec![d]);
    }
    let jsonl: Option<Vec<Value>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<Value>(l).ok())
        .collect();
    match jsonl {
        Some(values) if !values.is_empty() => values
            .into_iter()
            .filter(|v| !is_header_record(v))
            .map(|v| read_document(&v.to_string(), format))
            .collect(),
        _ => read_document(text, format).map(|d| vec![d]),
    }
}

/// One single-function tool per function, named after the function. This is
/// how arithmetic corpora treat every operation as its own tool.
pub fn split_per_function(doc: &ToolDocumentation) -> Vec<ToolDocumentation> {
    doc.functions
        .iter()
        .map(|f| ToolDocumentation {
            tool_name: f.name.clone(),
            tool_description: f.description.clone(),
            source_format: doc.source_format,
            functions: vec![f.clone()],
            raw_extras: Default::default(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detect_each_format() {
        let rapid = r#"{"tool_name": "Ebay", "api_list": []}"#;
        assert_eq!(detect_format(rapid), Ok(SourceFormat::RapidApiJson));
        assert_eq!(
            detect_format("GET /tv/latest Get the most newly created TV show."),
            Ok(SourceFormat::RestEndpointCatalog)
        );
        assert_eq!(
            detect_format("# TMDB\n\nGET /tv/latest: latest show"),
            Ok(SourceFormat::RestEndpointCatalog)
        );
        assert_eq!(
            detect_format("add_(input: List) -> Number"),
            Ok(SourceFormat::BareFunction)
        );
    }

    #[test]
    fn detect_rejects_unknown() {
        assert_eq!(detect_format(""), Err(IngestError::UnrecognizedFormat));
        assert_eq!(
            detect_format("just some prose"),
            Err(IngestError::UnrecognizedFormat)
        );
        assert_eq!(
            detect_format(r#"{"foo": 1}"#),
            Err(IngestError::UnrecognizedFormat)
        );
    }

    #[test]
    fn detect_is_deterministic() {
        let text = "GET /a x\nPOST /b y";
        let first = detect_format(text);
        for _ in 0..10 {
            assert_eq!(detect_format(text), first);
        }
    }

    #[test]
    fn corpus_reads_jsonl_and_skips_headers() {
        let doc = parse_bare_function("# t\nf_(x: Number)").unwrap();
        let text = format!(
            "{{\"header\":{{\"seed\":1}}}}\n{}\n{}\n",
            serialize_doc_line(&doc),
            serialize_doc_line(&doc)
        );
        let docs = read_corpus(&text, None).unwrap();
        assert_eq!(docs, vec![doc.clone(), doc]);
    }

    #[test]
    fn split_functions_into_tools() {
        let doc = parse_bare_function("# FuncQA\nadd_(input: List)\nsubtract_(input: List)").unwrap();
        let tools = split_per_function(&doc);
        assert_eq!(tools.len(), 2);
        assert_eq!(tools[1].tool_name, "subtract_");
        assert!(tools.iter().all(|t| t.validate().is_ok()));
    }
}
