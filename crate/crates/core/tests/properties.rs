use std::collections::HashSet;

use easytool_core::agent::{AgentConfig, AgentTrace, TerminatedReason};
use easytool_core::eval::{extract_last_number, numeric_correct, pass_rate};
use easytool_core::ingest::{parse_canonical, serialize_doc, FunctionSpec, ParameterSpec, SourceFormat, ToolDocumentation, ValueType};
use easytool_core::instruct::{validate_guideline, FunctionGuideline, UsageExample};
use easytool_core::retrieval::{cosine_similarity, ndcg_at_k, top_k, EmbeddingProvider, HashEmbedding, RetrievalIndex};
use easytool_core::tokens::{corpus_stats, reduction_ratio, FallbackTokenizer, StatsEntry, Tokenizer};
use proptest::prelude::*;
use serde_json::{json, Map, Value};

const TYPES: [ValueType; 5] = [
    ValueType::String,
    ValueType::Number,
    ValueType::Boolean,
    ValueType::List,
    ValueType::Object,
];

fn value_type() -> impl Strategy<Value = ValueType> {
    (0..TYPES.len()).prop_map(|i| TYPES[i])
}

fn value_of(ty: ValueType) -> BoxedStrategy<Value> {
    match ty {
        ValueType::String => "[a-z ]{0,8}".prop_map(Value::from).boxed(),
        ValueType::Number => (-1000i64..1000).prop_map(Value::from).boxed(),
        ValueType::Boolean => any::<bool>().prop_map(Value::from).boxed(),
        ValueType::List => prop::collection::vec(0i64..9, 0..3).prop_map(|v| json!(v)).boxed(),
        ValueType::Object => Just(json!({"k": 1})).boxed(),
    }
}

fn any_value() -> BoxedStrategy<Value> {
    value_type().prop_flat_map(value_of).boxed()
}

fn parameter(name: String) -> impl Strategy<Value = ParameterSpec> {
    (value_type(), "[A-Za-z ]{0,12}", any::<bool>()).prop_flat_map(move |(ty, description, with_default)| {
        let name = name.clone();
        let default = if with_default {
            value_of(ty).prop_map(Some).boxed()
        } else {
            Just(None).boxed()
        };
        default.prop_map(move |default| ParameterSpec {
            name: name.clone(),
            value_type: ty,
            description: description.clone(),
            default,
        })
    })
}

fn function(name: String) -> impl Strategy<Value = FunctionSpec> {
    (
        prop::collection::btree_set("[a-z]{1,6}", 0..5),
        0usize..5,
        "[A-Za-z .]{0,20}",
        prop::option::of("[a-z_(): ]{1,12}"),
    )
        .prop_flat_map(move |(names, split, description, template)| {
            let names: Vec<String> = names.into_iter().collect();
            let split = split.min(names.len());
            let required: Vec<_> = names[..split].iter().cloned().map(parameter).collect();
            let optional: Vec<_> = names[split..].iter().cloned().map(parameter).collect();
            let name = name.clone();
            (required, optional).prop_map(move |(required_parameters, optional_parameters)| FunctionSpec {
                name: name.clone(),
                description: description.clone(),
                required_parameters,
                optional_parameters,
                invocation_template: template.clone(),
            })
        })
}

fn documentation() -> impl Strategy<Value = ToolDocumentation> {
    (
        "[A-Za-z][A-Za-z ]{0,10}",
        "[A-Za-z .]{0,30}",
        prop::collection::btree_set("[a-z][a-z_ ]{0,8}", 1..4),
        prop::collection::btree_map("[a-z]{1,5}", "[a-z0-9]{0,6}", 0..3),
    )
        .prop_flat_map(|(tool_name, tool_description, fnames, extras)| {
            let fns: Vec<_> = fnames.into_iter().map(function).collect();
            fns.prop_map(move |functions| ToolDocumentation {
                tool_name: tool_name.clone(),
                tool_description: tool_description.clone(),
                source_format: SourceFormat::RapidApiJson,
                functions,
                raw_extras: extras.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            })
        })
}

/// Independent schema check: missing required, unknown key,
/// wrong JSON kind.
fn oracle_schema_ok(spec: &FunctionSpec, args: &Map<String, Value>) -> bool {
    let declared: Vec<&ParameterSpec> = spec
        .required_parameters
        .iter()
        .chain(&spec.optional_parameters)
        .collect();
    let kind_ok = |ty: ValueType, v: &Value| match ty {
        ValueType::String => v.is_string(),
        ValueType::Number => v.is_number(),
        ValueType::Boolean => v.is_boolean(),
        ValueType::List => v.is_array(),
        ValueType::Object => v.is_object(),
    };
    let missing = spec
        .required_parameters
        .iter()
        .any(|p| !args.contains_key(&p.name));
    let bad_key = args.iter().any(|(k, v)| match declared.iter().find(|p| &p.name == k) {
        None => true,
        Some(p) => !kind_ok(p.value_type, v),
    });
    !missing && !bad_key
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

const WORDS: [&str; 8] = ["weather", "movie", "search", "product", "price", "city", "actor", "list"];

fn phrase() -> impl Strategy<Value = String> {
    prop::collection::vec(0..WORDS.len(), 1..5).prop_map(|v| v.iter().map(|i| WORDS[*i]).collect::<Vec<_>>().join(" "))
}

fn trace(reason: TerminatedReason) -> AgentTrace {
    AgentTrace {
        request: "r".into(),
        config: AgentConfig::default(),
        subtasks: vec![],
        steps: vec![],
        final_answer: None,
        terminated_reason: reason,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn canonical_round_trip(doc in documentation()) {
        prop_assume!(doc.validate().is_ok());
        let text = serialize_doc(&doc);
        let back = parse_canonical(&text).unwrap();
        prop_assert_eq!(&back, &doc);
        prop_assert_eq!(serialize_doc(&back), text);
    }

    #[test]
    fn validation_agrees_with_independent_check(
        spec in function("f".into()),
        args in prop::collection::btree_map("[a-z]{1,6}", any_value(), 0..5),
    ) {
        let args: Map<String, Value> = args.into_iter().collect();
        let g = FunctionGuideline::from_spec(&spec, String::new(), UsageExample { scenario: "s".into(), parameters: args.clone() });
        let report = validate_guideline("t", &g, &spec, None);
        prop_assert_eq!(report.parameter_schema_ok, oracle_schema_ok(&spec, &args));
        prop_assert!(!report.executed);
    }

    #[test]
    fn top_k_matches_exhaustive_scan(
        descriptions in prop::collection::vec(phrase(), 0..50),
        query in phrase(),
        k in 1usize..60,
    ) {
        let h = HashEmbedding::default();
        let items: Vec<(String, String)> = descriptions.iter().enumerate().map(|(i, d)| (format!("tool{i:02}"), d.clone())).collect();
        let index = RetrievalIndex::build(items.iter().map(|(a, b)| (a.as_str(), b.as_str())), &h).unwrap();
        let got = top_k(&index, &query, k, &h).unwrap();

        let q = h.embed(&query).unwrap();
        let mut oracle: Vec<(String, f64)> = items.iter().map(|(id, d)| (id.clone(), oracle_cosine(&q, &h.embed(d).unwrap()))).collect();
        oracle.sort_by(|a, b| a.0.cmp(&b.0));
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        oracle.truncate(k);

        prop_assert_eq!(got.len(), oracle.len());
        for (g, o) in got.iter().zip(&oracle) {
            prop_assert_eq!(&g.tool_id, &o.0);
            prop_assert_eq!(g.score, o.1);
        }
        for w in got.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
    }

    #[test]
    fn index_is_independent_of_input_order(descriptions in prop::collection::vec(phrase(), 1..20), seed in any::<u64>()) {
        let h = HashEmbedding::default();
        let items: Vec<(String, String)> = descriptions.iter().enumerate().map(|(i, d)| (format!("t{i}"), d.clone())).collect();
        let mut shuffled = items.clone();
        let n = shuffled.len();
        for i in 0..n {
            shuffled.swap(i, (seed as usize).wrapping_add(i * 7) % n);
        }
        let a = RetrievalIndex::build(items.iter().map(|(x, y)| (x.as_str(), y.as_str())), &h).unwrap();
        let b = RetrievalIndex::build(shuffled.iter().map(|(x, y)| (x.as_str(), y.as_str())), &h).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(top_k(&a, "movie actor", 5, &h).unwrap(), top_k(&b, "movie actor", 5, &h).unwrap());
    }

    #[test]
    fn cosine_is_scale_invariant(
        a in prop::collection::vec(-10.0f64..10.0, 4),
        b in prop::collection::vec(-10.0f64..10.0, 4),
        c in 0.001f64..1000.0,
    ) {
        prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
        let scaled: Vec<f64> = a.iter().map(|x| x * c).collect();
        let s1 = cosine_similarity(&a, &b).unwrap();
        let s2 = cosine_similarity(&scaled, &b).unwrap();
        prop_assert!((s1 - s2).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&s1));
    }

    #[test]
    fn ndcg_bounds(ranked in prop::collection::vec(0u8..8, 0..8), relevant in prop::collection::hash_set(0u8..8, 0..5), k in 1usize..10) {
        let ranked: Vec<String> = ranked.iter().map(|x| x.to_string()).collect();
        let relevant: HashSet<String> = relevant.iter().map(|x| x.to_string()).collect();
        let v = ndcg_at_k(&ranked, &relevant, k);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        if !relevant.is_empty() && k >= relevant.len() {
            let mut ideal: Vec<String> = relevant.iter().cloned().collect();
            ideal.sort();
            ideal.extend(ranked.iter().filter(|r| !relevant.contains(*r)).cloned());
            prop_assert!((ndcg_at_k(&ideal, &relevant, k) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reduction_is_antitone(doc in 1u64..100_000, a in 0u64..200_000, b in 0u64..200_000) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(reduction_ratio(doc, lo).unwrap() >= reduction_ratio(doc, hi).unwrap());
        prop_assert_eq!(reduction_ratio(doc, 0).unwrap().to_string(), "100.00");
    }

    #[test]
    fn numeric_check_is_sign_symmetric(answer in -1.0e6f64..1.0e6, gold in -1.0e6f64..1.0e6) {
        let fwd = numeric_correct(&format!("{answer}"), gold);
        let back = numeric_correct(&format!("{}", -answer), -gold);
        prop_assert_eq!(fwd, back);
    }

    #[test]
    fn number_scan_agrees_with_pattern(text in "[0-9a-z ,.eE+-]{0,24}") {
        let re = regex::Regex::new(r"-?\d[\d,]*(?:\.\d+)?(?:[eE][-+]?\d+)?").unwrap();
        let expected = re.find_iter(&text).last().and_then(|m| {
            let glued = text[..m.start()].chars().last().is_some_and(|c| c.is_alphanumeric());
            let s = if glued { m.as_str().trim_start_matches('-') } else { m.as_str() };
            s.replace(',', "").parse::<f64>().ok()
        });
        prop_assert_eq!(extract_last_number(&text), expected);
    }

    #[test]
    fn fallback_count_monotone_and_subadditive(a in "\\PC{0,40}", b in "\\PC{0,40}") {
        let t = FallbackTokenizer;
        let ab = format!("{a}{b}");
        prop_assert!(t.count(&ab) >= t.count(&a));
        prop_assert!(t.count(&ab) <= t.count(&a) + t.count(&b) + 1);
        prop_assert_eq!(t.count(&ab), t.count(&ab));
    }

    #[test]
    fn singleton_stats_equal_the_measurement(description in "\\PC{0,60}", full in "\\PC{0,120}", ex in any::<bool>()) {
        let t = FallbackTokenizer;
        let e = StatsEntry { description: description.clone(), full_document: full.clone(), has_examples: ex };
        let s = corpus_stats(&[e], &t).unwrap();
        prop_assert_eq!(s.avg_description_tokens, t.count(&description) as f64);
        prop_assert_eq!(s.avg_document_tokens, t.count(&full) as f64);
        prop_assert_eq!(s.has_usage_examples, ex);
    }

    #[test]
    fn pass_rate_of_concatenation_is_weighted_mean(a in prop::collection::vec(any::<bool>(), 1..30), b in prop::collection::vec(any::<bool>(), 1..30)) {
        let mk = |v: &[bool]| v.iter().map(|ok| trace(if *ok { TerminatedReason::Answered } else { TerminatedReason::TrialsExhausted })).collect::<Vec<_>>();
        let (ta, tb) = (mk(&a), mk(&b));
        let all: Vec<AgentTrace> = ta.iter().chain(&tb).cloned().collect();
        let weighted = (pass_rate(&ta).unwrap() * ta.len() as f64 + pass_rate(&tb).unwrap() * tb.len() as f64) / all.len() as f64;
        let whole = pass_rate(&all).unwrap();
        prop_assert!((whole - weighted).abs() < 1e-9);
        prop_assert!((0.0..=100.0).contains(&whole));
    }
}
