//! Prompt templates. Defaults are compiled in; any file of the same name in a
//! prompt directory replaces the default, which is how rewritten task
//! prompts are swapped in without rebuilding.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("cannot read prompt file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad demonstration file: {0}")]
    Demos(String),
}

/// One in-prompt input → output demonstration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Demonstrations {
    #[serde(default)]
    pub description: Vec<Demonstration>,
    #[serde(default)]
    pub guideline: Vec<Demonstration>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub description: String,
    pub guideline: String,
    pub planning: String,
    pub selection: String,
    pub answer: String,
    pub judge_success: String,
    pub judge_pairwise: String,
    pub demos: Demonstrations,
}

const DEFAULT_DEMOS: &str = include_str!("../prompts/demos.json");

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            description: include_str!("../prompts/description.txt").into(),
            guideline: include_str!("../prompts/guideline.txt").into(),
            planning: include_str!("../prompts/planning.txt").into(),
            selection: include_str!("../prompts/selection.txt").into(),
            answer: include_str!("../prompts/answer.txt").into(),
            judge_success: include_str!("../prompts/judge_success.txt").into(),
            judge_pairwise: include_str!("../prompts/judge_pairwise.txt").into(),
            demos: serde_json::from_str(DEFAULT_DEMOS).expect("bundled demos parse"),
        }
    }
}

impl PromptSet {
    /// Defaults overlaid with whatever files exist in `dir`.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let mut set = Self::default();
        let slots: [(&str, &mut String); 7] = [
            ("description.txt", &mut set.description),
            ("guideline.txt", &mut set.guideline),
            ("planning.txt", &mut set.planning),
            ("selection.txt", &mut set.selection),
            ("answer.txt", &mut set.answer),
            ("judge_success.txt", &mut set.judge_success),
            ("judge_pairwise.txt", &mut set.judge_pairwise),
        ];
        for (name, slot) in slots {
            let path = dir.join(name);
            if path.exists() {
                *slot = read(&path)?;
            }
        }
        let demos = dir.join("demos.json");
        if demos.exists() {
            set.demos = serde_json::from_str(&read(&demos)?)
                .map_err(|e| PromptError::Demos(e.to_string()))?;
        }
        Ok(set)
    }
}

fn read(path: &Path) -> Result<String, PromptError> {
    std::fs::read_to_string(path).map_err(|source| PromptError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Substitute `{name}` for each provided `name`, in one pass. Braces that do
/// not enclose a provided name, such as JSON examples in the template, are
/// left alone, and substituted text is never rescanned.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let vars: HashMap<&str, &str> = vars.iter().copied().collect();
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let key_len = after
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(after.len());
        let key = &after[..key_len];
        match vars.get(key) {
            Some(value) if after[key_len..].starts_with('}') => {
                out.push_str(value);
                rest = &after[key_len + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}
