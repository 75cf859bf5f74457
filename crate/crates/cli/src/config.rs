use std::path::{Path, PathBuf};

use easytool_core::agent::AgentConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSection {
    /// `scripted` or `network`.
    pub kind: Option<String>,
    pub script: Option<String>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub credential_env: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InventorySection {
    pub documents: Option<String>,
    pub instructions: Option<String>,
    /// `arithmetic` or `static`.
    pub executor: Option<String>,
    pub responses: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub tokenizer: String,
    pub embedding: String,
    pub prompt_dir: Option<String>,
    pub provider: ProviderSection,
    pub agent: AgentConfig,
    pub inventory: InventorySection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            tokenizer: "fallback".into(),
            embedding: "hash".into(),
            prompt_dir: None,
            provider: ProviderSection::default(),
            agent: AgentConfig::default(),
            inventory: InventorySection::default(),
        }
    }
}

/// Loaded configuration plus the directory relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    base: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self {
                config: PipelineConfig::default(),
                base: PathBuf::from("."),
            });
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: PipelineConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = Self { config, base };
        loaded.check()?;
        Ok(loaded)
    }

    /// Every referenced path must exist, and the agent bounds must be positive.
    fn check(&self) -> Result<(), CliError> {
        let c = &self.config;
        let paths = [
            ("prompt_dir", &c.prompt_dir),
            ("provider.script", &c.provider.script),
            ("inventory.documents", &c.inventory.documents),
            ("inventory.instructions", &c.inventory.instructions),
            ("inventory.responses", &c.inventory.responses),
        ];
        for (key, value) in paths {
            if let Some(v) = value {
                let p = self.resolve(v);
                if !p.exists() {
                    return Err(CliError::Config(format!("{key} = {v:?}: {} does not exist", p.display())));
                }
            }
        }
        c.agent
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn resolve_opt(&self, p: &Option<String>) -> Option<PathBuf> {
        p.as_deref().map(|p| self.resolve(p))
    }

    /// sha256 over the effective configuration, with paths as written.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&self.config).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}
