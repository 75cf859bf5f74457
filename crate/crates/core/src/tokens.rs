//! Token counting, corpus statistics and reduction ratios.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{self, ToolDocumentation};
use crate::instruct::ToolInstruction;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TokenError {
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("unknown tokenizer `{0}` (expected fallback or cl100k)")]
    UnknownTokenizer(String),
}

pub trait Tokenizer: Send + Sync {
    fn id(&self) -> &str;
    fn count(&self, text: &str) -> usize;
}

/// Dependency-free tokenizer: runs of alphanumerics and `_` are one token,
/// every other non-space character is a token of its own.
#[derive(Debug, Clone, Copy, Default)]
pub struct FallbackTokenizer;

impl Tokenizer for FallbackTokenizer {
    fn id(&self) -> &str {
        "fallback"
    }

    fn count(&self, text: &str) -> usize {
        let mut n = 0;
        let mut in_word = false;
        for c in text.chars() {
            if c.is_alphanumeric() || c == '_' {
                if !in_word {
                    n += 1;
                    in_word = true;
                }
            } else {
                in_word = false;
                if !c.is_whitespace() {
                    n += 1;
                }
            }
        }
        n
    }
}

/// cl100k_base byte-pair encoding.
#[cfg(feature = "cl100k")]
pub struct Cl100kTokenizer {
    bpe: &'static tiktoken_rs::CoreBPE,
}

#[cfg(feature = "cl100k")]
impl Cl100kTokenizer {
    pub fn new() -> Self {
        Self {
            bpe: tiktoken_rs::cl100k_base_singleton(),
        }
    }
}

#[cfg(feature = "cl100k")]
impl Default for Cl100kTokenizer {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(feature = "cl100k")]
impl Tokenizer for Cl100kTokenizer {
    fn id(&self) -> &str {
        "cl100k"
    }

    fn count(&self, text: &str) -> usize {
        self.bpe.encode_ordinary(text).len()
    }
}

/// Tokenizer by name: `fallback` or `cl100k`.
pub fn tokenizer_by_name(name: &str) -> Result<Box<dyn Tokenizer>, TokenError> {
    match name {
        "fallback" => Ok(Box::new(FallbackTokenizer)),
        #[cfg(feature = "cl100k")]
        "cl100k" | "cl100k_base" => Ok(Box::new(Cl100kTokenizer::new())),
        other => Err(TokenError::UnknownTokenizer(other.to_string())),
    }
}

pub fn count_tokens(text: &str, tk: &dyn Tokenizer) -> usize {
    tk.count(text)
}

/// A percentage held exactly in hundredths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Percentage {
    hundredths: i64,
}

impl Percentage {
    pub fn from_hundredths(hundredths: i64) -> Self {
        Self { hundredths }
    }

    pub fn hundredths(self) -> i64 {
        self.hundredths
    }

    pub fn as_f64(self) -> f64 {
        self.hundredths as f64 / 100.0
    }
}

impl fmt::Display for Percentage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.hundredths < 0 { "-" } else { "" };
        let abs = self.hundredths.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl Serialize for Percentage {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Percentage {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Ok(Self::from_hundredths((v * 100.0).round() as i64))
    }
}

/// Percent of documentation tokens saved, rounded half away from zero to
/// two decimals. Negative when the instruction is longer.
pub fn reduction_ratio(doc_tokens: u64, ins_tokens: u64) -> Result<Percentage, TokenError> {
    if doc_tokens == 0 {
        return Err(TokenError::DomainError("doc_tokens must be positive".into()));
    }
    let d = doc_tokens as i128;
    let num = 10_000 * (d - ins_tokens as i128);
    let rounded = if num >= 0 {
        (2 * num + d) / (2 * d)
    } else {
        -((-2 * num + d) / (2 * d))
    };
    Ok(Percentage::from_hundredths(rounded as i64))
}

/// One corpus entry to measure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatsEntry {
    pub description: String,
    pub full_document: String,
    pub has_examples: bool,
}

impl StatsEntry {
    /// Tool and function descriptions together with the parameter blocks.
    pub fn from_documentation(doc: &ToolDocumentation) -> Self {
        let mut description = doc.tool_description.clone();
        for f in &doc.functions {
            description.push('\n');
            description.push_str(&f.name);
            if !f.description.is_empty() {
                description.push_str(": ");
                description.push_str(&f.description);
            }
            if f.has_parameters() {
                description.push('\n');
                description.push_str(
                    &serde_json::to_string(&serde_json::json!({
                        "required_parameters": f.required_parameters,
                        "optional_parameters": f.optional_parameters,
                    }))
                    .expect("parameters serialize"),
                );
            }
        }
        Self {
            description,
            full_document: ingest::serialize_doc(doc),
            has_examples: false,
        }
    }

    pub fn from_instruction(ins: &ToolInstruction) -> Self {
        Self {
            description: ins.description.clone(),
            full_document: ins.to_json_pretty(),
            has_examples: !ins.function_guidelines.is_empty(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub avg_description_tokens: f64,
    pub avg_document_tokens: f64,
    pub has_usage_examples: bool,
    pub n_documents: usize,
    pub total_document_tokens: u64,
}

pub fn corpus_stats(entries: &[StatsEntry], tk: &dyn Tokenizer) -> Result<CorpusStats, TokenError> {
    if entries.is_empty() {
        return Err(TokenError::DomainError("corpus is empty".into()));
    }
    let mut desc = 0u64;
    let mut full = 0u64;
    for e in entries {
        desc += tk.count(&e.description) as u64;
        full += tk.count(&e.full_document) as u64;
    }
    let n = entries.len();
    Ok(CorpusStats {
        avg_description_tokens: desc as f64 / n as f64,
        avg_document_tokens: full as f64 / n as f64,
        has_usage_examples: entries.iter().all(|e| e.has_examples),
        n_documents: n,
        total_document_tokens: full,
    })
}

/// Documentation-vs-instruction comparison row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionRecord {
    pub dataset: String,
    pub token_doc: u64,
    pub token_ins: u64,
    pub reduce_pct: Percentage,
}

impl ReductionRecord {
    pub fn new(dataset: impl Into<String>, token_doc: u64, token_ins: u64) -> Result<Self, TokenError> {
        Ok(Self {
            dataset: dataset.into(),
            token_doc,
            token_ins,
            reduce_pct: reduction_ratio(token_doc, token_ins)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fallback_counts() {
        let t = FallbackTokenizer;
        assert_eq!(t.count(""), 0);
        assert_eq!(t.count("a b c"), 3);
        assert_eq!(t.count("add_(input: List)"), 6);
        assert_eq!(t.count("  \n\t"), 0);
    }

    #[test]
    fn reduction_values() {
        assert_eq!(reduction_ratio(2530, 748).unwrap().to_string(), "70.43");
        assert_eq!(reduction_ratio(3881, 103).unwrap().to_string(), "97.35");
        assert_eq!(reduction_ratio(100, 100).unwrap().to_string(), "0.00");
        assert_eq!(reduction_ratio(100, 0).unwrap().to_string(), "100.00");
        assert_eq!(reduction_ratio(100, 150).unwrap().to_string(), "-50.00");
        // 1/8 = 12.5 %, 1/800 = 0.125 % rounds up to 0.13
        assert_eq!(reduction_ratio(800, 799).unwrap().to_string(), "0.13");
        assert_eq!(reduction_ratio(800, 801).unwrap().to_string(), "-0.13");
        assert!(reduction_ratio(0, 1).is_err());
    }

    #[test]
    fn stats_means() {
        let e = |n: usize| StatsEntry {
            description: "w ".repeat(n / 2),
            full_document: "w ".repeat(n),
            has_examples: true,
        };
        let s = corpus_stats(&[e(10), e(20)], &FallbackTokenizer).unwrap();
        assert_eq!(s.avg_document_tokens, 15.0);
        assert_eq!(s.avg_description_tokens, 7.5);
        assert!(s.has_usage_examples);
        let one = corpus_stats(&[e(10)], &FallbackTokenizer).unwrap();
        assert_eq!(one.avg_document_tokens, 10.0);
        assert!(corpus_stats(&[], &FallbackTokenizer).is_err());
    }

    #[cfg(feature = "cl100k")]
    #[test]
    fn cl100k_known_string() {
        let t = Cl100kTokenizer::new();
        assert_eq!(t.count(""), 0);
        assert_eq!(t.count("hello world"), 2);
    }
}
