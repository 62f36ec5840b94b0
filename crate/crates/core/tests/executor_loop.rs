//! Closed loop: template questions, gold decompositions as plans, the graph
//! stub as QA model and BM25 over graph sentences as retriever. Every run
//! must reproduce the gold answer set.

use std::collections::BTreeSet;
use std::path::PathBuf;

use lpkg_core::dsl::parse_plan;
use lpkg_core::exec::{answer_key, execute, kg_corpus, Bm25Retriever, ExecConfig, KgQaStub, OraclePlanner, Planner};
use lpkg_core::kg::{KgFormat, KnowledgeGraph};
use lpkg_core::llm::RetryPolicy;
use lpkg_core::pattern::{answer_set, ground, GroundConfig, PatternType};
use lpkg_core::synth::{synthetic_graph, SynthConfig};
use lpkg_core::verbalize::verbalize_template;

fn toy() -> KnowledgeGraph {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/toy50.tsv");
    KnowledgeGraph::load(&path, KgFormat::Tsv).unwrap()
}

fn keys<'a>(xs: impl IntoIterator<Item = &'a String>) -> BTreeSet<String> {
    xs.into_iter().map(|s| answer_key(s)).collect()
}

/// Runs up to `per_pattern` instances of every pattern; returns how many ran.
fn closed_loop(kg: &KnowledgeGraph, per_pattern: usize, fan_out: bool) -> usize {
    let retriever = Bm25Retriever::new(kg_corpus(kg)).unwrap();
    let qa = KgQaStub::new(kg);
    let cfg = ExecConfig {
        retry: RetryPolicy::none(),
        fan_out,
        ..ExecConfig::default()
    };
    let mut ran = 0;
    for p in PatternType::ALL {
        for inst in ground(kg, p, &GroundConfig::new(per_pattern, 11)).unwrap().instances {
            let v = verbalize_template(kg, &inst).unwrap();
            let mut planner = OraclePlanner::new();
            planner.insert(v.complex_question.clone(), p, v.sub_questions.clone());
            let program = parse_plan(&planner.plan(&v.complex_question).unwrap()).unwrap();
            let trace = execute(&program, &v.complex_question, &retriever, &qa, &cfg).unwrap();
            assert!(trace.is_ok(), "{p}: {:?}", trace.error);
            let gold = answer_set(kg, &inst).unwrap().labels(kg);
            assert_eq!(
                keys(trace.answer.values()),
                keys(&gold),
                "{p} instance {:?}: {}",
                v.sub_questions,
                v.complex_question
            );
            ran += 1;
        }
    }
    ran
}

#[test]
fn hundred_toy_instances_reproduce_gold() {
    let kg = toy();
    let ran = closed_loop(&kg, 12, false);
    assert!(ran >= 100, "only {ran} instances");
}

#[test]
fn fan_out_reaches_the_same_answers() {
    let kg = toy();
    closed_loop(&kg, 6, true);
}

#[test]
fn synthetic_graph_loop() {
    let kg = synthetic_graph(&SynthConfig::new(300, 7));
    assert!(closed_loop(&kg, 5, false) > 0);
}
