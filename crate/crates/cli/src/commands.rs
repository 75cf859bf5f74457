use std::collections::HashSet;

use easytool_core::agent::{read_traces, run_agent, AgentDeps, ArithmeticExecutor, InstructionMode, ToolExecutor};
use easytool_core::eval::{
    correct_path_rate, numeric_accuracy, pair_by_request, read_gold, success_rate, task_error_rate, win_rate,
    EvaluationReport, Metric,
};
use easytool_core::ingest::{self, SourceFormat};
use easytool_core::instruct::{validate_guideline, InstructError, InstructionGenerator};
use easytool_core::provider::DecodingConfig;
use easytool_core::retrieval::{evaluate_index, top_k, Qrel, RetrievalIndex};
use easytool_core::tokens::{corpus_stats, tokenizer_by_name, CorpusStats, ReductionRecord, StatsEntry};
use serde_json::{json, Value};

use crate::config::LoadedConfig;
use crate::error::{runtime, CliError};
use crate::inputs::{self, Corpus};
use crate::{Cli, Command, EvalArgs, ExecuteArg, FormatArg, IndexCommand, IngestArgs, ModeArg, RefineArgs, RunArgs, StatsArgs, ValidateArgs};

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut cfg = LoadedConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.config.seed = seed;
    }
    match cli.command {
        Command::Ingest(a) => ingest_cmd(&cfg, a),
        Command::Refine(a) => refine(&cfg, a),
        Command::Validate(a) => validate(&cfg, a),
        Command::Stats(a) => stats(&cfg, a),
        Command::Index(c) => index(&cfg, c),
        Command::Run(a) => run(&mut cfg, a),
        Command::Eval(a) => eval(&cfg, a),
    }
}

fn ingest_cmd(cfg: &LoadedConfig, a: IngestArgs) -> Result<(), CliError> {
    let format = a.format.map(|f| match f {
        FormatArg::Rapidapi => SourceFormat::RapidApiJson,
        FormatArg::Rest => SourceFormat::RestEndpointCatalog,
        FormatArg::Bare => SourceFormat::BareFunction,
    });
    let text = inputs::read_text(&a.input)?;
    let mut docs = ingest::read_corpus(&text, format).map_err(|e| CliError::Runtime(format!("{}: {e}", a.input.display())))?;
    if a.per_function {
        docs = docs.iter().flat_map(ingest::split_per_function).collect();
    }
    log::info!("ingested {} document(s)", docs.len());
    inputs::write_text(&a.out, &inputs::jsonl_with_header(cfg, docs.iter().map(ingest::serialize_doc_line)))
}

fn local_executor(e: ExecuteArg) -> Option<ArithmeticExecutor> {
    match e {
        ExecuteArg::None => None,
        ExecuteArg::Arithmetic => Some(ArithmeticExecutor::new()),
    }
}

fn refine(cfg: &LoadedConfig, a: RefineArgs) -> Result<(), CliError> {
    let docs = inputs::read_docs(&a.input)?;
    let provider = inputs::provider(cfg, a.provider.as_deref())?;
    let prompts = inputs::prompts(cfg, a.prompt_dir.as_deref())?;
    let executor = local_executor(a.execute);
    let mut generator = InstructionGenerator::new(provider.as_ref(), &prompts).with_decoding(DecodingConfig::default());
    if let Some(ex) = &executor {
        generator = generator.with_executor(ex);
    }
    let mut lines = Vec::with_capacity(docs.len());
    for doc in &docs {
        match generator.build_instruction(doc) {
            Ok(ins) => lines.push(ins.to_json_line()),
            Err(InstructError::InstructionIncomplete { failures, .. }) => {
                let detail: Vec<String> = failures
                    .iter()
                    .map(|f| format!("{}: {}", f.function_name, f.failure_reason.clone().unwrap_or_default()))
                    .collect();
                return Err(CliError::Runtime(format!(
                    "no valid guideline for {} in `{}`",
                    detail.join(", "),
                    doc.tool_name
                )));
            }
            Err(e) => return Err(CliError::Runtime(format!("`{}`: {e}", doc.tool_name))),
        }
    }
    inputs::write_text(&a.out, &inputs::jsonl_with_header(cfg, lines))
}

fn validate(cfg: &LoadedConfig, a: ValidateArgs) -> Result<(), CliError> {
    let docs = inputs::read_docs(&a.docs)?;
    let instructions = inputs::read_instructions(&a.instructions)?;
    let executor = local_executor(a.execute);
    let mut reports = Vec::new();
    let mut failed = 0;
    for ins in &instructions {
        let doc = docs
            .iter()
            .find(|d| d.tool_name == ins.tool_name)
            .ok_or_else(|| CliError::Runtime(format!("no documentation for `{}`", ins.tool_name)))?;
        for g in &ins.function_guidelines {
            let spec = doc.function(&g.function_name).ok_or_else(|| {
                CliError::Runtime(format!("`{}` has no function `{}`", doc.tool_name, g.function_name))
            })?;
            let r = validate_guideline(
                &doc.tool_name,
                g,
                spec,
                executor.as_ref().map(|e| e as &dyn ToolExecutor),
            );
            if !r.passed() {
                failed += 1;
            }
            reports.push(json!({ "tool_name": doc.tool_name, "report": r }).to_string());
        }
    }
    let text = inputs::jsonl_with_header(cfg, reports);
    match &a.out {
        Some(p) => inputs::write_text(p, &text)?,
        None => print!("{text}"),
    }
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} guideline(s) failed validation")));
    }
    Ok(())
}

fn stats(cfg: &LoadedConfig, a: StatsArgs) -> Result<(), CliError> {
    let name = a.tokenizer.unwrap_or_else(|| cfg.config.tokenizer.clone());
    let tk = tokenizer_by_name(&name).map_err(|e| CliError::Usage(e.to_string()))?;
    let (kind, entries) = match inputs::read_any_corpus(&a.input)? {
        Corpus::Documentation(d) => ("documentation", d.iter().map(StatsEntry::from_documentation).collect::<Vec<_>>()),
        Corpus::Instructions(i) => ("instruction", i.iter().map(StatsEntry::from_instruction).collect()),
    };
    let s = corpus_stats(&entries, tk.as_ref()).map_err(runtime)?;
    let body = match &a.against {
        None => {
            let mut v = json!({ "corpus": kind, "tokenizer": tk.id() });
            v.as_object_mut()
                .expect("object")
                .extend(serde_json::to_value(&s).expect("stats serialize").as_object().cloned().unwrap_or_default());
            v
        }
        Some(path) => {
            let other: Value = serde_json::from_str(&inputs::read_text(path)?).map_err(runtime)?;
            if other.get("tokenizer").and_then(Value::as_str) != Some(tk.id()) {
                return Err(CliError::Usage(format!("{} was counted with a different tokenizer", path.display())));
            }
            let doc: CorpusStats = serde_json::from_value(other).map_err(runtime)?;
            let record = ReductionRecord::new(
                a.dataset.clone(),
                doc.avg_document_tokens.round() as u64,
                s.avg_document_tokens.round() as u64,
            )
            .map_err(runtime)?;
            serde_json::to_value(record).expect("record serializes")
        }
    };
    let text = inputs::object_with_header(cfg, body);
    match &a.out {
        Some(p) => inputs::write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn index(cfg: &LoadedConfig, c: IndexCommand) -> Result<(), CliError> {
    let embedding = inputs::embedding(cfg)?;
    match c {
        IndexCommand::Build { input, out } => {
            let index = match inputs::read_any_corpus(&input)? {
                Corpus::Instructions(i) => easytool_core::retrieval::build_index(&i, embedding.as_ref()).map_err(runtime)?,
                Corpus::Documentation(d) => {
                    let reg = easytool_core::agent::ToolRegistry::from_documents(d);
                    inputs::build_index(&reg, InstructionMode::RawDocumentation, embedding.as_ref())?
                }
            };
            let body: Value = serde_json::from_str(&index.to_json()).expect("index json");
            let text = inputs::object_with_header(cfg, body);
            inputs::write_text(&out, &text)
        }
        IndexCommand::Query { index, query, k } => {
            let idx = RetrievalIndex::from_json(&inputs::read_text(&index)?, embedding.as_ref()).map_err(runtime)?;
            for s in top_k(&idx, &query, k, embedding.as_ref()).map_err(runtime)? {
                println!("{}", json!({ "tool_id": s.tool_id, "score": s.score }));
            }
            Ok(())
        }
        IndexCommand::Eval { index, qrels, out } => {
            let idx = RetrievalIndex::from_json(&inputs::read_text(&index)?, embedding.as_ref()).map_err(runtime)?;
            let qrels: Vec<Qrel> = read_gold(&inputs::read_text(&qrels)?)
                .map_err(runtime)?
                .into_iter()
                .filter_map(|g| {
                    g.relevant_tools.map(|r| Qrel {
                        request: g.request,
                        relevant_tools: r,
                    })
                })
                .collect();
            let report = evaluate_index(&idx, &qrels, embedding.as_ref()).map_err(runtime)?;
            let text = inputs::object_with_header(cfg, serde_json::to_value(report).expect("report serializes"));
            match out {
                Some(p) => inputs::write_text(&p, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}

fn run(cfg: &mut LoadedConfig, a: RunArgs) -> Result<(), CliError> {
    if let Some(m) = a.mode {
        cfg.config.agent.instruction_mode = match m {
            ModeArg::Raw => InstructionMode::RawDocumentation,
            ModeArg::Easytool => InstructionMode::EasyToolInstruction,
        };
    }
    let cfg = &*cfg;
    let agent = cfg.config.agent.clone();
    let (registry, executor) = inputs::inventory(cfg)?;
    let embedding = inputs::embedding(cfg)?;
    let index = inputs::build_index(&registry, agent.instruction_mode, embedding.as_ref())?;
    let provider = inputs::provider(cfg, a.provider.as_deref())?;
    let prompts = inputs::prompts(cfg, None)?;
    let deps = AgentDeps {
        provider: provider.as_ref(),
        prompts: &prompts,
        decoding: DecodingConfig::default(),
        embedding: embedding.as_ref(),
        index: &index,
        registry: &registry,
        executor: executor.as_ref(),
    };
    let mut text = inputs::header(cfg).to_string();
    text.push('\n');
    for request in inputs::requests(&a.request)? {
        let trace = run_agent(&request, &agent, &deps).map_err(runtime)?;
        log::info!("`{request}`: {:?}", trace.terminated_reason);
        text.push_str(&trace.to_jsonl());
    }
    inputs::write_text(&a.trace_out, &text)
}

fn eval(cfg: &LoadedConfig, a: EvalArgs) -> Result<(), CliError> {
    let metrics: HashSet<Metric> = a
        .metrics
        .split(',')
        .filter(|m| !m.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(CliError::Usage)?;
    let traces = read_traces(&inputs::read_text(&a.traces)?).map_err(CliError::Runtime)?;
    let mut report = EvaluationReport::base(&traces).map_err(runtime)?;
    let gold = match &a.gold {
        Some(p) => Some(read_gold(&inputs::read_text(p)?).map_err(runtime)?),
        None => None,
    };
    let need_gold = || gold.as_deref().ok_or_else(|| CliError::Usage("--gold is required for cp and acc".into()));
    if metrics.contains(&Metric::Cp) {
        report.cp_rate = Some(correct_path_rate(&traces, need_gold()?).map_err(runtime)?);
    }
    if metrics.contains(&Metric::Acc) {
        report.accuracy = Some(numeric_accuracy(&traces, need_gold()?).map_err(runtime)?);
    }
    if a.per_task {
        report.task_error_rate = Some(task_error_rate(&traces).map_err(runtime)?);
    }
    if metrics.contains(&Metric::Success) || metrics.contains(&Metric::Win) {
        let judge_arg = a
            .judge
            .as_deref()
            .ok_or_else(|| CliError::Usage("--judge is required for success and win".into()))?;
        let judge = inputs::provider(cfg, Some(judge_arg))?;
        let prompts = inputs::prompts(cfg, None)?;
        let decoding = DecodingConfig::default();
        if metrics.contains(&Metric::Success) {
            report.success_rate = Some(success_rate(&traces, judge.as_ref(), &prompts, &decoding).map_err(runtime)?);
        }
        if metrics.contains(&Metric::Win) {
            let baseline = a
                .baseline
                .as_ref()
                .ok_or_else(|| CliError::Usage("--baseline is required for win".into()))?;
            let other = read_traces(&inputs::read_text(baseline)?).map_err(CliError::Runtime)?;
            let pairs = pair_by_request(traces.clone(), other).map_err(runtime)?;
            let w = win_rate(&pairs, judge.as_ref(), &prompts, &decoding, cfg.config.seed).map_err(runtime)?;
            report.win_rate = Some(w.win_rate);
        }
    }
    let text = inputs::object_with_header(cfg, serde_json::to_value(&report).expect("report serializes"));
    match &a.report {
        Some(p) => inputs::write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
