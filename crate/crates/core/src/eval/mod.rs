//! Metrics over agent traces and gold data.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agent::{select_tool, AgentTrace, InstructionMode, RegisteredTool, StepOutcome, Subtask, TerminatedReason, ToolRegistry};
use crate::json_block::{first_json_object, get_ci};
use crate::prompts::{render, PromptSet};
use crate::provider::{CompletionProvider, DecodingConfig, ProviderError, RepairError, Repairing};
use crate::retrieval::{rank, score, RetrievalIndex, Scored};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no input to evaluate")]
    EmptyInput,
    #[error("no gold record for `{0}`")]
    MissingGold(String),
    #[error("bad gold data: {0}")]
    InvalidGold(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub request: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_tool_path: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevant_tools: Option<Vec<String>>,
}

impl GoldRecord {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.gold_tool_path.is_none() && self.gold_answer.is_none() && self.relevant_tools.is_none() {
            return Err(EvalError::InvalidGold(format!("`{}` has no gold field", self.request)));
        }
        Ok(())
    }

    /// The gold answer as a number, if it is one or is a numeric string.
    pub fn numeric_answer(&self) -> Option<f64> {
        match self.gold_answer.as_ref()? {
            Value::Number(n) => n.as_f64(),
            Value::String(s) => extract_last_number(s),
            _ => None,
        }
    }
}

/// Gold JSONL; lines with a `header` key are skipped.
pub fn read_gold(text: &str) -> Result<Vec<GoldRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value =
            serde_json::from_str(line).map_err(|e| EvalError::InvalidGold(format!("line {}: {e}", i + 1)))?;
        if v.get("header").is_some() {
            continue;
        }
        let g: GoldRecord =
            serde_json::from_value(v).map_err(|e| EvalError::InvalidGold(format!("line {}: {e}", i + 1)))?;
        g.validate()?;
        out.push(g);
    }
    Ok(out)
}

fn pct(hits: f64, n: usize) -> f64 {
    100.0 * hits / n as f64
}

pub fn pass_rate(traces: &[AgentTrace]) -> Result<f64, EvalError> {
    if traces.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let answered = traces
        .iter()
        .filter(|t| t.terminated_reason == TerminatedReason::Answered)
        .count();
    Ok(pct(answered as f64, traces.len()))
}

pub fn render_success_prompt(prompts: &PromptSet, question: &str, answer: &str) -> String {
    render(&prompts.judge_success, &[("question", question), ("answer", answer)])
}

fn parse_choice(output: &str, allowed: &[&str]) -> Result<String, String> {
    let obj = first_json_object(output)?;
    let choice = match get_ci(&obj, "Choice") {
        Some(Value::String(s)) => s.trim().to_string(),
        Some(Value::Number(n)) => n.to_string(),
        _ => return Err("the output needs a \"Choice\"".into()),
    };
    allowed
        .iter()
        .find(|a| a.eq_ignore_ascii_case(&choice))
        .map(|a| a.to_string())
        .ok_or_else(|| format!("\"Choice\" must be one of {}", allowed.join(", ")))
}

/// Per-trace judge verdicts. Traces without an answer and unparseable
/// verdicts count as failures.
pub fn success_verdicts(
    traces: &[AgentTrace],
    judge: &dyn CompletionProvider,
    prompts: &PromptSet,
    decoding: &DecodingConfig,
) -> Result<Vec<bool>, EvalError> {
    let repairing = Repairing::new(judge, decoding.clone());
    let mut out = Vec::with_capacity(traces.len());
    for t in traces {
        let Some(answer) = &t.final_answer else {
            out.push(false);
            continue;
        };
        let prompt = render_success_prompt(prompts, &t.request, answer);
        match repairing.complete_checked(&prompt, |o| parse_choice(o, &["Yes", "No"])) {
            Ok(c) => out.push(c == "Yes"),
            Err(RepairError::Rejected { violation, .. }) => {
                log::warn!("judge verdict unusable for `{}`: {violation}", t.request);
                out.push(false);
            }
            Err(RepairError::Provider(p)) => return Err(p.into()),
        }
    }
    Ok(out)
}

pub fn success_rate(
    traces: &[AgentTrace],
    judge: &dyn CompletionProvider,
    prompts: &PromptSet,
    decoding: &DecodingConfig,
) -> Result<f64, EvalError> {
    if traces.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let v = success_verdicts(traces, judge, prompts, decoding)?;
    Ok(pct(v.iter().filter(|b| **b).count() as f64, v.len()))
}

/// Text form of a trace's solution path for pairwise judging.
pub fn describe_path(trace: &AgentTrace) -> String {
    let mut s = String::new();
    for st in &trace.steps {
        if st.call.is_none() {
            s.push_str(&format!("- subtask {}: no call ({})\n", st.subtask_id, st.raw_result));
        } else {
            s.push_str(&format!(
                "- subtask {}: {}.{}({}) -> {:?}: {}\n",
                st.subtask_id,
                st.call.tool_id,
                st.call.function_name,
                Value::Object(st.call.arguments.clone()),
                st.outcome,
                st.raw_result
            ));
        }
    }
    s.push_str(&format!(
        "Final answer: {}\n",
        trace.final_answer.as_deref().unwrap_or("(none)")
    ));
    s
}

pub fn render_pairwise_prompt(prompts: &PromptSet, question: &str, first: &str, second: &str) -> String {
    render(
        &prompts.judge_pairwise,
        &[("question", question), ("path_1", first), ("path_2", second)],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairJudgement {
    pub a_presented_first: bool,
    /// Credit to side A: 1, 0, or 0.5 for an undecided pair.
    pub score_a: f64,
    pub judged: bool,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRateReport {
    pub win_rate: f64,
    pub seed: u64,
    pub pairs: Vec<PairJudgement>,
}

/// How often side A is preferred. Presentation order is drawn per pair from
/// a ChaCha generator seeded with `seed`. An answered side beats an
/// unanswered one without asking the judge; two unanswered sides, or a judge
/// that refuses to choose twice, split the pair.
pub fn win_rate(
    pairs: &[(AgentTrace, AgentTrace)],
    judge: &dyn CompletionProvider,
    prompts: &PromptSet,
    decoding: &DecodingConfig,
    seed: u64,
) -> Result<WinRateReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let repairing = Repairing::new(judge, decoding.clone()).with_max_repairs(1);
    let mut judged = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        let a_first: bool = rng.random_bool(0.5);
        let mut j = PairJudgement {
            a_presented_first: a_first,
            score_a: 0.5,
            judged: false,
            flagged: false,
        };
        match (a.final_answer.is_some(), b.final_answer.is_some()) {
            (true, false) => j.score_a = 1.0,
            (false, true) => j.score_a = 0.0,
            (false, false) => {}
            (true, true) => {
                let (pa, pb) = (describe_path(a), describe_path(b));
                let (first, second) = if a_first { (&pa, &pb) } else { (&pb, &pa) };
                let prompt = render_pairwise_prompt(prompts, &a.request, first, second);
                j.judged = true;
                match repairing.complete_checked(&prompt, |o| parse_choice(o, &["1", "2"])) {
                    Ok(c) => j.score_a = if (c == "1") == a_first { 1.0 } else { 0.0 },
                    Err(RepairError::Rejected { .. }) => j.flagged = true,
                    Err(RepairError::Provider(p)) => return Err(p.into()),
                }
            }
        }
        judged.push(j);
    }
    let total: f64 = judged.iter().map(|j| j.score_a).sum();
    Ok(WinRateReport {
        win_rate: pct(total, judged.len()),
        seed,
        pairs: judged,
    })
}

pub fn is_subsequence<T, U>(needle: &[T], haystack: &[U], eq: impl Fn(&T, &U) -> bool) -> bool {
    let mut it = haystack.iter();
    needle.iter().all(|n| it.any(|h| eq(n, h)))
}

/// Whether the successful calls of `trace` contain `gold` as a subsequence.
/// Gold elements may name a tool or `tool::function`.
pub fn path_correct(trace: &AgentTrace, gold: &[String]) -> bool {
    let calls: Vec<(&str, &str)> = trace
        .steps
        .iter()
        .filter(|s| s.outcome == StepOutcome::Success)
        .map(|s| (s.call.tool_id.as_str(), s.call.function_name.as_str()))
        .collect();
    is_subsequence(gold, &calls, |g, (tool, func)| match g.split_once("::") {
        Some((gt, gf)) => gt == *tool && gf == *func,
        None => g == tool,
    })
}

fn gold_for<'a>(golds: &'a [GoldRecord], request: &str) -> Option<&'a GoldRecord> {
    golds.iter().find(|g| g.request == request)
}

pub fn correct_path_rate(traces: &[AgentTrace], golds: &[GoldRecord]) -> Result<f64, EvalError> {
    if traces.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut hits = 0;
    for t in traces {
        let path = gold_for(golds, &t.request)
            .and_then(|g| g.gold_tool_path.as_ref())
            .ok_or_else(|| EvalError::MissingGold(t.request.clone()))?;
        if path_correct(t, path) {
            hits += 1;
        }
    }
    Ok(pct(hits as f64, traces.len()))
}

/// End of a number starting at `i`: an optional minus, a digit, digits and
/// commas, an optional fraction, an optional exponent.
fn number_end(b: &[u8], i: usize) -> Option<usize> {
    let digits = |mut j: usize| {
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        j
    };
    let mut j = i;
    if b.get(j) == Some(&b'-') {
        j += 1;
    }
    if !b.get(j).is_some_and(u8::is_ascii_digit) {
        return None;
    }
    while j < b.len() && (b[j].is_ascii_digit() || b[j] == b',') {
        j += 1;
    }
    if b.get(j) == Some(&b'.') && b.get(j + 1).is_some_and(u8::is_ascii_digit) {
        j = digits(j + 1);
    }
    if matches!(b.get(j), Some(b'e' | b'E')) {
        let k = if matches!(b.get(j + 1), Some(b'-' | b'+')) { j + 2 } else { j + 1 };
        if b.get(k).is_some_and(u8::is_ascii_digit) {
            j = digits(k);
        }
    }
    Some(j)
}

/// Last number in free text, with thousands separators removed. A minus sign
/// glued to a preceding letter or digit is a hyphen, not a sign.
pub fn extract_last_number(text: &str) -> Option<f64> {
    let b = text.as_bytes();
    let (mut i, mut last) = (0, None);
    while i < b.len() {
        match number_end(b, i) {
            Some(end) => {
                last = Some((i, end));
                i = end;
            }
            None => i += 1,
        }
    }
    let (start, end) = last?;
    let mut s = &text[start..end];
    if s.starts_with('-') && text[..start].chars().last().is_some_and(|c| c.is_alphanumeric()) {
        s = &s[1..];
    }
    s.replace(',', "").parse().ok()
}

/// Relative tolerance of 0.1 %, exact match for a zero gold.
pub fn within_tolerance(answer: f64, gold: f64) -> bool {
    if !answer.is_finite() {
        return false;
    }
    if gold == 0.0 {
        answer == 0.0
    } else {
        (answer - gold).abs() <= 0.001 * gold.abs()
    }
}

pub fn numeric_correct(answer: &str, gold: f64) -> bool {
    extract_last_number(answer).is_some_and(|a| within_tolerance(a, gold))
}

pub fn numeric_accuracy(traces: &[AgentTrace], golds: &[GoldRecord]) -> Result<f64, EvalError> {
    if traces.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut hits = 0;
    for t in traces {
        let gold = gold_for(golds, &t.request)
            .and_then(GoldRecord::numeric_answer)
            .ok_or_else(|| EvalError::MissingGold(t.request.clone()))?;
        if t.final_answer.as_deref().is_some_and(|a| numeric_correct(a, gold)) {
            hits += 1;
        }
    }
    Ok(pct(hits as f64, traces.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    #[serde(rename = "ToolNameError")]
    pub tool_name_errors: usize,
    #[serde(rename = "ParameterError")]
    pub parameter_errors: usize,
}

impl ErrorBreakdown {
    pub fn total(&self) -> usize {
        self.tool_name_errors + self.parameter_errors
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolErrorRate {
    pub rate: f64,
    pub calls: usize,
    pub breakdown: ErrorBreakdown,
}

/// Tool-related errors over all tool calls. Steps where no call was formed
/// are not calls.
pub fn tool_error_rate(traces: &[AgentTrace]) -> Result<ToolErrorRate, EvalError> {
    let mut breakdown = ErrorBreakdown::default();
    let mut calls = 0;
    for s in traces.iter().flat_map(|t| &t.steps).filter(|s| !s.call.is_none()) {
        calls += 1;
        match s.outcome {
            StepOutcome::ToolNameError => breakdown.tool_name_errors += 1,
            StepOutcome::ParameterError => breakdown.parameter_errors += 1,
            _ => {}
        }
    }
    if calls == 0 {
        return Err(EvalError::EmptyInput);
    }
    Ok(ToolErrorRate {
        rate: pct(breakdown.total() as f64, calls),
        calls,
        breakdown,
    })
}

/// Share of tasks with at least one tool-related error.
pub fn task_error_rate(traces: &[AgentTrace]) -> Result<f64, EvalError> {
    if traces.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let bad = traces
        .iter()
        .filter(|t| t.steps.iter().any(|s| s.outcome.is_tool_error()))
        .count();
    Ok(pct(bad as f64, traces.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Pass,
    Success,
    Win,
    Cp,
    Acc,
    Err,
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "pass" => Metric::Pass,
            "success" => Metric::Success,
            "win" => Metric::Win,
            "cp" => Metric::Cp,
            "acc" => Metric::Acc,
            "err" => Metric::Err,
            other => return Err(format!("unknown metric `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub pass_rate: f64,
    pub success_rate: Option<f64>,
    pub win_rate: Option<f64>,
    pub cp_rate: Option<f64>,
    pub accuracy: Option<f64>,
    pub tool_error_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_error_rate: Option<f64>,
    pub error_breakdown: ErrorBreakdown,
    pub n: usize,
}

impl EvaluationReport {
    /// Pass rate and error rates, with the optional metrics unset.
    pub fn base(traces: &[AgentTrace]) -> Result<Self, EvalError> {
        let errors = match tool_error_rate(traces) {
            Ok(e) => e,
            Err(EvalError::EmptyInput) => ToolErrorRate {
                rate: 0.0,
                calls: 0,
                breakdown: ErrorBreakdown::default(),
            },
            Err(e) => return Err(e),
        };
        Ok(Self {
            pass_rate: pass_rate(traces)?,
            success_rate: None,
            win_rate: None,
            cp_rate: None,
            accuracy: None,
            tool_error_rate: errors.rate,
            task_error_rate: None,
            error_breakdown: errors.breakdown,
            n: traces.len(),
        })
    }
}

/// One request of a selection sweep and the tool that should be picked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionCase {
    pub request: String,
    pub gold_tool: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub request: String,
    pub pool: Vec<String>,
    pub gold_position: usize,
    pub picked: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub pool_size: usize,
    pub accuracy: f64,
    pub records: Vec<SelectionRecord>,
}

/// Gold tool plus its `n - 1` nearest neighbours by description vector.
pub fn distractor_pool(index: &RetrievalIndex, gold_tool: &str, n: usize) -> Result<Vec<String>, EvalError> {
    let gold = index
        .get(gold_tool)
        .ok_or_else(|| EvalError::MissingGold(format!("tool `{gold_tool}` is not indexed")))?;
    let others: Vec<Scored> = index
        .entries()
        .iter()
        .filter(|e| e.tool_id != gold_tool)
        .map(|e| Scored {
            tool_id: e.tool_id.clone(),
            score: score(&gold.vector, &e.vector),
        })
        .collect();
    let mut pool = vec![gold_tool.to_string()];
    pool.extend(rank(others).into_iter().take(n.saturating_sub(1)).map(|s| s.tool_id));
    Ok(pool)
}

pub struct SweepDeps<'a> {
    pub index: &'a RetrievalIndex,
    pub registry: &'a ToolRegistry,
    pub provider: &'a dyn CompletionProvider,
    pub prompts: &'a PromptSet,
    pub decoding: DecodingConfig,
    pub mode: InstructionMode,
}

/// Selection accuracy as the candidate pool grows. Pools are shuffled with a
/// ChaCha generator seeded with `seed`; the gold position is recorded.
pub fn selection_accuracy_sweep(
    cases: &[SelectionCase],
    pool_sizes: &[usize],
    deps: &SweepDeps<'_>,
    seed: u64,
) -> Result<Vec<SweepPoint>, EvalError> {
    if cases.is_empty() || pool_sizes.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(pool_sizes.len());
    for &n in pool_sizes {
        let mut records = Vec::with_capacity(cases.len());
        for case in cases {
            let mut pool = distractor_pool(deps.index, &case.gold_tool, n.max(1))?;
            pool.shuffle(&mut rng);
            let gold_position = pool.iter().position(|t| *t == case.gold_tool).expect("gold is pooled");
            let tools: Vec<&RegisteredTool> = pool.iter().filter_map(|t| deps.registry.get(t)).collect();
            let subtask = Subtask {
                id: 1,
                text: case.request.clone(),
                depends_on: vec![],
            };
            let picked = match select_tool(
                &subtask,
                "",
                &tools,
                deps.mode,
                deps.provider,
                deps.prompts,
                &deps.decoding,
                &Default::default(),
            ) {
                Ok(call) => Some(call.tool_id),
                Err(crate::agent::AgentError::Provider(p)) => return Err(p.into()),
                Err(_) => None,
            };
            records.push(SelectionRecord {
                request: case.request.clone(),
                pool,
                gold_position,
                picked,
            });
        }
        let hits = records
            .iter()
            .zip(cases)
            .filter(|(r, c)| r.picked.as_deref() == Some(c.gold_tool.as_str()))
            .count();
        points.push(SweepPoint {
            pool_size: n,
            accuracy: pct(hits as f64, records.len()),
            records,
        });
    }
    Ok(points)
}

/// Group traces by request, keeping first-seen order.
pub fn pair_by_request(a: Vec<AgentTrace>, b: Vec<AgentTrace>) -> Result<Vec<(AgentTrace, AgentTrace)>, EvalError> {
    let mut by_req: HashMap<String, AgentTrace> = b.into_iter().map(|t| (t.request.clone(), t)).collect();
    a.into_iter()
        .map(|t| {
            let other = by_req
                .remove(&t.request)
                .ok_or_else(|| EvalError::MissingGold(format!("no paired trace for `{}`", t.request)))?;
            Ok((t, other))
        })
        .collect()
}
