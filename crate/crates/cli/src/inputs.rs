use std::path::Path;

use easytool_core::agent::{index_registry, ArithmeticExecutor, InstructionMode, StaticExecutor, ToolExecutor, ToolRegistry};
use easytool_core::ingest::{self, is_header_record, ToolDocumentation};
use easytool_core::instruct::ToolInstruction;
use easytool_core::prompts::PromptSet;
use easytool_core::provider::{CompletionProvider, ScriptedProvider};
use easytool_core::retrieval::{EmbeddingProvider, HashEmbedding, RetrievalIndex};
use serde_json::{Map, Value};

use crate::config::LoadedConfig;
use crate::error::{runtime, CliError};

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(runtime)?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Header record carried by every output file.
pub fn header(cfg: &LoadedConfig) -> Value {
    serde_json::json!({
        "header": {
            "config_hash": cfg.hash(),
            "seed": cfg.config.seed,
            "tool_version": env!("CARGO_PKG_VERSION"),
        }
    })
}

/// Header line followed by one JSON line per record.
pub fn jsonl_with_header(cfg: &LoadedConfig, lines: impl IntoIterator<Item = String>) -> String {
    let mut out = header(cfg).to_string();
    out.push('\n');
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    out
}

/// A JSON object with the header as its first key.
pub fn object_with_header(cfg: &LoadedConfig, body: Value) -> String {
    let mut map = Map::new();
    map.insert("header".into(), header(cfg)["header"].clone());
    match body {
        Value::Object(m) => map.extend(m),
        other => {
            map.insert("data".into(), other);
        }
    }
    let mut s = serde_json::to_string_pretty(&Value::Object(map)).expect("json serializes");
    s.push('\n');
    s
}

fn data_lines(text: &str) -> Result<Vec<Value>, CliError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line)
            .map_err(|e| CliError::Runtime(format!("line {}: {e}", i + 1)))?;
        if !is_header_record(&v) {
            out.push(v);
        }
    }
    Ok(out)
}

pub fn read_docs(path: &Path) -> Result<Vec<ToolDocumentation>, CliError> {
    ingest::read_corpus(&read_text(path)?, None).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn read_instructions(path: &Path) -> Result<Vec<ToolInstruction>, CliError> {
    data_lines(&read_text(path)?)?
        .into_iter()
        .map(|v| serde_json::from_value(v).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display()))))
        .collect()
}

/// Either kind of corpus, told apart by the first record.
pub enum Corpus {
    Documentation(Vec<ToolDocumentation>),
    Instructions(Vec<ToolInstruction>),
}

pub fn read_any_corpus(path: &Path) -> Result<Corpus, CliError> {
    let text = read_text(path)?;
    let first = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .filter_map(|l| serde_json::from_str::<Value>(l).ok())
        .find(|v| !is_header_record(v));
    if first.is_some_and(|v| v.get("function_guidelines").is_some()) {
        Ok(Corpus::Instructions(read_instructions(path)?))
    } else {
        Ok(Corpus::Documentation(read_docs(path)?))
    }
}

pub fn prompts(cfg: &LoadedConfig, flag: Option<&Path>) -> Result<PromptSet, CliError> {
    let dir = flag.map(Path::to_path_buf).or_else(|| cfg.resolve_opt(&cfg.config.prompt_dir));
    match dir {
        Some(d) => PromptSet::from_dir(&d).map_err(|e| CliError::Config(e.to_string())),
        None => Ok(PromptSet::default()),
    }
}

/// `scripted:<path>` or `network`; without a flag, the config's provider.
pub fn provider(cfg: &LoadedConfig, flag: Option<&str>) -> Result<Box<dyn CompletionProvider>, CliError> {
    let p = &cfg.config.provider;
    let (kind, script) = match flag {
        Some(s) => match s.split_once(':') {
            Some(("scripted", path)) => ("scripted".to_string(), Some(Path::new(path).to_path_buf())),
            None if s == "network" => ("network".to_string(), None),
            None if s == "scripted" => ("scripted".to_string(), cfg.resolve_opt(&p.script)),
            _ => return Err(CliError::Usage(format!("bad provider `{s}` (scripted:<file> or network)"))),
        },
        None => (
            p.kind.clone().unwrap_or_else(|| "scripted".into()),
            cfg.resolve_opt(&p.script),
        ),
    };
    match kind.as_str() {
        "scripted" => {
            let path = script.ok_or_else(|| CliError::Config("a scripted provider needs a script file".into()))?;
            if !path.exists() {
                return Err(CliError::Config(format!("{} does not exist", path.display())));
            }
            Ok(Box::new(ScriptedProvider::load(&path).map_err(|e| CliError::Config(e.to_string()))?))
        }
        "network" => network_provider(cfg),
        other => Err(CliError::Config(format!("unknown provider kind `{other}`"))),
    }
}

#[cfg(feature = "network")]
fn network_provider(cfg: &LoadedConfig) -> Result<Box<dyn CompletionProvider>, CliError> {
    use easytool_core::provider::{NetworkProvider, NetworkSettings};
    let p = &cfg.config.provider;
    let need = |v: &Option<String>, key: &str| {
        v.clone()
            .ok_or_else(|| CliError::Config(format!("provider.{key} is required for the network provider")))
    };
    Ok(Box::new(NetworkProvider::new(NetworkSettings {
        endpoint: need(&p.endpoint, "endpoint")?,
        model: need(&p.model, "model")?,
        credential_env: need(&p.credential_env, "credential_env")?,
    })))
}

#[cfg(not(feature = "network"))]
fn network_provider(_: &LoadedConfig) -> Result<Box<dyn CompletionProvider>, CliError> {
    Err(CliError::Config("built without network support".into()))
}

pub fn embedding(cfg: &LoadedConfig) -> Result<Box<dyn EmbeddingProvider>, CliError> {
    match cfg.config.embedding.as_str() {
        "hash" | "hash-256" => Ok(Box::new(HashEmbedding::default())),
        other => Err(CliError::Config(format!("unknown embedding provider `{other}`"))),
    }
}

pub fn build_index(
    registry: &ToolRegistry,
    mode: InstructionMode,
    provider: &dyn EmbeddingProvider,
) -> Result<RetrievalIndex, CliError> {
    index_registry(registry, mode, provider).map_err(runtime)
}

/// Registry and executor described by the `[inventory]` section.
pub fn inventory(cfg: &LoadedConfig) -> Result<(ToolRegistry, Box<dyn ToolExecutor>), CliError> {
    let inv = &cfg.config.inventory;
    let executor_kind = inv.executor.clone().unwrap_or_else(|| "static".into());
    let docs = match cfg.resolve_opt(&inv.documents) {
        Some(p) => read_docs(&p)?,
        None if executor_kind == "arithmetic" => ArithmeticExecutor::documents(),
        None => return Err(CliError::Config("inventory.documents is required".into())),
    };
    let instructions = match cfg.resolve_opt(&inv.instructions) {
        Some(p) => read_instructions(&p)?,
        None => Vec::new(),
    };
    let registry = ToolRegistry::with_instructions(docs, instructions);
    let executor: Box<dyn ToolExecutor> = match executor_kind.as_str() {
        "arithmetic" => Box::new(ArithmeticExecutor::new()),
        "static" => {
            let ex = StaticExecutor::new(registry.clone());
            match cfg.resolve_opt(&inv.responses) {
                Some(p) => Box::new(ex.with_responses_json(&read_text(&p)?).map_err(|e| CliError::Config(e.to_string()))?),
                None => Box::new(ex),
            }
        }
        other => return Err(CliError::Config(format!("unknown executor `{other}`"))),
    };
    Ok((registry, executor))
}

/// Literal request text, or the requests listed in a file: gold JSONL
/// records, or one request per non-empty line.
pub fn requests(arg: &str) -> Result<Vec<String>, CliError> {
    let path = Path::new(arg);
    if !path.is_file() {
        return Ok(vec![arg.to_string()]);
    }
    let text = read_text(path)?;
    let mut out = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        match serde_json::from_str::<Value>(line) {
            Ok(v) if is_header_record(&v) => {}
            Ok(Value::Object(o)) if o.contains_key("request") => {
                out.push(o["request"].as_str().unwrap_or_default().to_string())
            }
            _ => out.push(line.to_string()),
        }
    }
    Ok(out)
}
