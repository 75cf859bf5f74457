//! Completion providers: the scripted fixture used for deterministic runs, a
//! chat-completions network adapter, and the bounded repair loop every
//! generation step goes through.

use std::path::Path;
use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How many times a rejected completion is sent back with the violation attached.
pub const MAX_REPAIRS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingConfig {
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("no scripted response matches prompt: {0}")]
    Unmatched(String),
    #[error("bad provider fixture: {0}")]
    Fixture(String),
    #[error("credential variable `{0}` is not set")]
    MissingCredential(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unexpected provider response: {0}")]
    Response(String),
}

pub trait CompletionProvider: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, prompt: &str, decoding: &DecodingConfig) -> Result<String, ProviderError>;
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for &P {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn complete(&self, prompt: &str, decoding: &DecodingConfig) -> Result<String, ProviderError> {
        (**self).complete(prompt, decoding)
    }
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for Box<P> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn complete(&self, prompt: &str, decoding: &DecodingConfig) -> Result<String, ProviderError> {
        (**self).complete(prompt, decoding)
    }
}

/// One scripted rule. A rule matches when every `contains` substring is
/// present, no `not_contains` substring is, and `regex` (if any) matches.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default)]
    pub contains: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub not_contains: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regex: Option<String>,
    pub response: String,
}

impl ScriptRule {
    pub fn new(contains: &[&str], response: impl Into<String>) -> Self {
        Self {
            contains: contains.iter().map(|s| s.to_string()).collect(),
            not_contains: Vec::new(),
            regex: None,
            response: response.into(),
        }
    }

    pub fn unless(mut self, absent: &[&str]) -> Self {
        self.not_contains = absent.iter().map(|s| s.to_string()).collect();
        self
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Rules { rules: Vec<ScriptRule> },
    Bare(Vec<ScriptRule>),
}

/// Replays canned completions. The first matching rule wins, so the output
/// depends only on the prompt. A prompt no rule matches is an error.
#[derive(Debug)]
pub struct ScriptedProvider {
    id: String,
    rules: Vec<(ScriptRule, Option<Regex>)>,
    log: Mutex<Vec<String>>,
}

impl ScriptedProvider {
    pub fn new(rules: Vec<ScriptRule>) -> Result<Self, ProviderError> {
        let rules = rules
            .into_iter()
            .map(|r| {
                let re = r
                    .regex
                    .as_deref()
                    .map(Regex::new)
                    .transpose()
                    .map_err(|e| ProviderError::Fixture(e.to_string()))?;
                Ok((r, re))
            })
            .collect::<Result<_, ProviderError>>()?;
        Ok(Self {
            id: "scripted".into(),
            rules,
            log: Mutex::new(Vec::new()),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, ProviderError> {
        let file: ScriptFile =
            serde_json::from_str(text).map_err(|e| ProviderError::Fixture(e.to_string()))?;
        match file {
            ScriptFile::Rules { rules } | ScriptFile::Bare(rules) => Self::new(rules),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Fixture(format!("{}: {e}", path.display())))?;
        let mut p = Self::from_json(&text)?;
        p.id = format!("scripted:{}", path.display());
        Ok(p)
    }

    pub fn rules(&self) -> impl Iterator<Item = &ScriptRule> {
        self.rules.iter().map(|(r, _)| r)
    }

    /// Prompts received so far, in order.
    pub fn prompts(&self) -> Vec<String> {
        self.log.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.log.lock().unwrap().len()
    }

    fn lookup(&self, prompt: &str) -> Option<&str> {
        self.rules
            .iter()
            .find(|(r, re)| {
                r.contains.iter().all(|s| prompt.contains(s.as_str()))
                    && !r.not_contains.iter().any(|s| prompt.contains(s.as_str()))
                    && re.as_ref().is_none_or(|re| re.is_match(prompt))
            })
            .map(|(r, _)| r.response.as_str())
    }
}

impl CompletionProvider for ScriptedProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, prompt: &str, _decoding: &DecodingConfig) -> Result<String, ProviderError> {
        self.log.lock().unwrap().push(prompt.to_string());
        self.lookup(prompt).map(str::to_string).ok_or_else(|| {
            let tail: String = prompt.chars().rev().take(160).collect::<Vec<_>>().into_iter().rev().collect();
            ProviderError::Unmatched(format!("...{tail}"))
        })
    }
}

/// Adapts a closure into a provider.
pub struct FnProvider<F> {
    id: String,
    f: F,
}

impl<F> FnProvider<F>
where
    F: Fn(&str) -> String + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        Self { id: id.into(), f }
    }
}

impl<F> CompletionProvider for FnProvider<F>
where
    F: Fn(&str) -> String + Send + Sync,
{
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, prompt: &str, _decoding: &DecodingConfig) -> Result<String, ProviderError> {
        Ok((self.f)(prompt))
    }
}

/// Settings for a chat-completions HTTP endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSettings {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub credential_env: String,
}

#[cfg(feature = "network")]
pub use network::NetworkProvider;

#[cfg(feature = "network")]
mod network {
    use serde_json::{json, Value};

    use super::{CompletionProvider, DecodingConfig, NetworkSettings, ProviderError};

    /// Chat-completions adapter. The request carries one user message; the
    /// reply text is read from `choices[0].message.content`.
    pub struct NetworkProvider {
        settings: NetworkSettings,
        id: String,
        agent: ureq::Agent,
    }

    impl NetworkProvider {
        pub fn new(settings: NetworkSettings) -> Self {
            let id = format!("network:{}", settings.model);
            let agent = ureq::Agent::config_builder()
                .http_status_as_error(false)
                .build()
                .new_agent();
            Self { settings, id, agent }
        }
    }

    impl CompletionProvider for NetworkProvider {
        fn id(&self) -> &str {
            &self.id
        }

        fn complete(
            &self,
            prompt: &str,
            decoding: &DecodingConfig,
        ) -> Result<String, ProviderError> {
            let key = std::env::var(&self.settings.credential_env)
                .map_err(|_| ProviderError::MissingCredential(self.settings.credential_env.clone()))?;
            let mut body = json!({
                "model": self.settings.model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": decoding.temperature,
            });
            if let Some(max) = decoding.max_tokens {
                body["max_tokens"] = json!(max);
            }
            let mut resp = self
                .agent
                .post(&self.settings.endpoint)
                .header("Authorization", &format!("Bearer {key}"))
                .send_json(&body)
                .map_err(|e| ProviderError::Transport(e.to_string()))?;
            let status = resp.status();
            let value: Value = resp
                .body_mut()
                .read_json()
                .map_err(|e| ProviderError::Response(e.to_string()))?;
            if !status.is_success() {
                return Err(ProviderError::Response(format!("HTTP {status}: {value}")));
            }
            value["choices"][0]["message"]["content"]
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| ProviderError::Response(format!("no message content in {value}")))
        }
    }
}

/// Outcome of a repair loop that never produced acceptable output.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RepairError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("rejected after {attempts} attempts: {violation}")]
    Rejected {
        attempts: usize,
        violation: String,
        last_output: String,
    },
}

/// Text appended to a prompt when its previous completion was rejected.
pub fn repair_prompt(prompt: &str, output: &str, violation: &str) -> String {
    format!(
        "{prompt}\n\nYour previous answer was rejected: {violation}\nPrevious answer:\n{output}\nAnswer again and fix this problem.\n"
    )
}

/// Wraps a provider so that each request is checked and, when the check
/// fails, re-asked with the violation appended, at most `max_repairs` times.
pub struct Repairing<'a> {
    inner: &'a dyn CompletionProvider,
    decoding: DecodingConfig,
    max_repairs: usize,
}

impl<'a> Repairing<'a> {
    pub fn new(inner: &'a dyn CompletionProvider, decoding: DecodingConfig) -> Self {
        Self {
            inner,
            decoding,
            max_repairs: MAX_REPAIRS,
        }
    }

    pub fn with_max_repairs(mut self, n: usize) -> Self {
        self.max_repairs = n;
        self
    }

    pub fn provider(&self) -> &'a dyn CompletionProvider {
        self.inner
    }

    pub fn decoding(&self) -> &DecodingConfig {
        &self.decoding
    }

    pub fn complete_checked<T>(
        &self,
        prompt: &str,
        mut check: impl FnMut(&str) -> Result<T, String>,
    ) -> Result<T, RepairError> {
        let mut current = prompt.to_string();
        let mut attempts = 0;
        loop {
            attempts += 1;
            let output = self.inner.complete(&current, &self.decoding)?;
            match check(&output) {
                Ok(v) => return Ok(v),
                Err(violation) if attempts > self.max_repairs => {
                    return Err(RepairError::Rejected {
                        attempts,
                        violation,
                        last_output: output,
                    })
                }
                Err(violation) => current = repair_prompt(prompt, &output, &violation),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_matching_rule_wins() {
        let p = ScriptedProvider::new(vec![
            ScriptRule::new(&["alpha", "beta"], "both"),
            ScriptRule::new(&["alpha"], "alpha only").unless(&["gamma"]),
            ScriptRule::new(&[], "fallback"),
        ])
        .unwrap();
        let d = DecodingConfig::default();
        assert_eq!(p.complete("alpha beta", &d).unwrap(), "both");
        assert_eq!(p.complete("alpha", &d).unwrap(), "alpha only");
        assert_eq!(p.complete("alpha gamma", &d).unwrap(), "fallback");
        assert_eq!(p.call_count(), 3);
    }

    #[test]
    fn unmatched_prompt_is_an_error() {
        let p = ScriptedProvider::new(vec![ScriptRule::new(&["x"], "y")]).unwrap();
        assert!(matches!(
            p.complete("nothing", &DecodingConfig::default()),
            Err(ProviderError::Unmatched(_))
        ));
    }

    #[test]
    fn identical_prompt_identical_output() {
        let p = ScriptedProvider::from_json(
            r#"{"rules": [{"regex": "^Q: \\d+$", "response": "number"}, {"contains": [], "response": "other"}]}"#,
        )
        .unwrap();
        let d = DecodingConfig::default();
        let a: Vec<_> = (0..5).map(|_| p.complete("Q: 12", &d).unwrap()).collect();
        assert!(a.iter().all(|r| r == "number"));
        assert_eq!(p.complete("Q: x", &d).unwrap(), "other");
    }

    #[test]
    fn bad_fixture_rejected() {
        assert!(matches!(
            ScriptedProvider::from_json("{\"rules\": 3}"),
            Err(ProviderError::Fixture(_))
        ));
        assert!(matches!(
            ScriptedProvider::from_json(r#"[{"regex": "(", "response": ""}]"#),
            Err(ProviderError::Fixture(_))
        ));
    }

    #[test]
    fn repair_loop_is_bounded() {
        let p = ScriptedProvider::new(vec![ScriptRule::new(&[], "bad")]).unwrap();
        let r = Repairing::new(&p, DecodingConfig::default());
        let err = r
            .complete_checked(&"q".to_string(), |o| {
                if o == "good" {
                    Ok(())
                } else {
                    Err("not good".to_string())
                }
            })
            .unwrap_err();
        assert!(matches!(err, RepairError::Rejected { attempts: 3, .. }));
        assert_eq!(p.call_count(), 1 + MAX_REPAIRS);
        assert!(p.prompts()[1].contains("rejected: not good"));
    }

    #[test]
    fn repair_recovers_when_repair_prompt_matches() {
        let p = ScriptedProvider::new(vec![
            ScriptRule::new(&["rejected"], "good"),
            ScriptRule::new(&[], "bad"),
        ])
        .unwrap();
        let r = Repairing::new(&p, DecodingConfig::default());
        let out = r
            .complete_checked("q", |o| (o == "good").then_some(o.to_string()).ok_or("no".to_string()))
            .unwrap();
        assert_eq!(out, "good");
        assert_eq!(p.call_count(), 2);
    }
}
