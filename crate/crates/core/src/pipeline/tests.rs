use std::sync::Arc;

use super::*;
use crate::client::MockChat;
use crate::corpus::{chunk_sentences, ChunkStore, Document};
use crate::eval::{MetricSpec, Qrels};
use crate::transform::Query;

fn docs() -> Vec<Document> {
    vec![
        Document::new("paris", "Paris is the capital of France. The Eiffel Tower stands in Paris."),
        Document::new("berlin", "Berlin is the capital of Germany. The Brandenburg Gate is in Berlin."),
        Document::new("rome", "Rome is the capital of Italy. The Colosseum is an ancient arena in Rome."),
        Document::new("madrid", "Madrid is the capital of Spain. The Prado museum is in Madrid."),
        Document::new("tokyo", "Tokyo is the capital of Japan. Tokyo hosts a large fish market."),
    ]
}

fn components(generator: MockChat) -> Arc<Components> {
    let chunks = docs().iter().flat_map(|d| chunk_sentences(d, 64).unwrap()).collect::<Vec<_>>();
    let store = ChunkStore::new(chunks).unwrap();
    Arc::new(Components::offline(store, generator, MockChat::echo()).with_built_indices().unwrap())
}

fn config(name: &str) -> PipelineConfig {
    PipelineConfig {
        timing: TimingMode::Logical,
        first_stage_k: 5,
        rerank_k: 3,
        ..preset(name).unwrap()
    }
}

fn pipeline(name: &str) -> Pipeline {
    Pipeline::new(config(name), components(MockChat::echo_top_doc())).unwrap()
}

fn query(id: &str, text: &str, gold_doc: &str, answer: &str) -> Query {
    Query {
        gold_doc_ids: vec![gold_doc.into()],
        gold_answers: vec![answer.into()],
        ..Query::new(id, text)
    }
}

fn queries() -> Vec<Query> {
    vec![
        query("q2", "Which city is the capital of Germany?", "berlin", "Berlin"),
        query("q1", "What is the capital of France?", "paris", "Paris"),
        query("q3", "Where is the Colosseum?", "rome", "Rome"),
    ]
}

#[test]
fn best_performance_runs_every_stage_in_order() {
    let p = pipeline(BEST_PERFORMANCE);
    let trace = p.run(&queries()[1]);
    assert!(trace.error.is_none(), "{:?}", trace.error);
    assert_eq!(
        trace.stages(),
        ["classify", "transform", "retrieve", "rerank", "repack", "summarize", "truncate", "prompt", "generate"]
    );
    let reranked = trace.reranked.as_ref().unwrap();
    assert_eq!(reranked.entries[0].chunk, "paris#0");
    assert!(reranked.len() <= 3);
    assert!(trace.prompt.contains("What is the capital of France?"));
    assert!(trace.summary.as_deref().unwrap().contains("Paris is the capital of France."));
    assert!(trace.answer.is_some());
    assert_eq!(trace.total_latency(), 0.0);
    assert!(trace.notes.contains_key("summarize"));
}

#[test]
fn sufficient_queries_skip_retrieval_stages() {
    let p = pipeline(BEST_PERFORMANCE);
    let q = Query {
        task_label: Some("translation".into()),
        ..Query::new("t1", "Translate 'good morning' into French.")
    };
    let trace = p.run(&q);
    assert!(trace.error.is_none());
    assert_eq!(trace.stages(), ["classify", "prompt", "generate"]);
    assert!(trace.candidates.is_none() && trace.reranked.is_none() && trace.context.is_none());
    assert!(!trace.decision.unwrap().needs_retrieval());
}

#[test]
fn disabling_classification_always_retrieves() {
    let cfg = PipelineConfig {
        classification: false,
        ..config(BEST_PERFORMANCE)
    };
    let p = Pipeline::new(cfg, components(MockChat::echo_top_doc())).unwrap();
    let q = Query {
        task_label: Some("translation".into()),
        ..Query::new("t1", "Translate 'capital of France' into German.")
    };
    let trace = p.run(&q);
    assert!(trace.decision.is_none());
    assert!(trace.has_stage("retrieve"));
    assert!(!trace.has_stage("classify"));
}

#[test]
fn no_reranker_truncates_without_a_rerank_stage() {
    let cfg = PipelineConfig {
        reranker: RerankerKind::None,
        summarizer: SummarizerKind::None,
        ..config(BEST_PERFORMANCE)
    };
    let p = Pipeline::new(cfg, components(MockChat::echo())).unwrap();
    let trace = p.run(&queries()[0]);
    assert!(!trace.has_stage("rerank") && !trace.has_stage("summarize"));
    // Reverse repacking puts the best chunk last.
    assert_eq!(trace.prompt_docs.len(), 3);
    let best = &trace.candidates.as_ref().unwrap().entries[0].chunk;
    let store = &p.components().store;
    assert_eq!(trace.prompt_docs.last().unwrap(), store.text(best).unwrap());
    // The mock sees rank order, so Echo answers with the best chunk.
    assert_eq!(trace.answer.as_deref(), Some(store.text(best).unwrap()));
}

#[test]
fn missing_components_are_config_errors() {
    let chunks = docs().iter().flat_map(|d| chunk_sentences(d, 64).unwrap()).collect::<Vec<_>>();
    let bare = Arc::new(Components::offline(
        ChunkStore::new(chunks).unwrap(),
        MockChat::echo(),
        MockChat::echo(),
    ));
    for name in [BEST_PERFORMANCE, BALANCED_EFFICIENCY] {
        let err = Pipeline::new(config(name), bare.clone()).err().unwrap();
        assert!(matches!(err, crate::Error::Config(_)), "{err}");
    }
}

#[test]
fn generation_failure_is_recorded_not_fatal() {
    let p = Pipeline::new(config(BEST_PERFORMANCE), components(MockChat::failing("down"))).unwrap();
    let trace = p.run(&queries()[0]);
    let err = trace.error.clone().unwrap();
    assert_eq!(err.stage, "generate");
    assert!(trace.answer.is_none());
    assert!(trace.has_stage("generate"));
}

#[test]
fn evaluation_is_ordered_and_deterministic() {
    let p = pipeline(BALANCED_EFFICIENCY);
    let (a, traces) = evaluate(&p, &queries(), None, &EvalOptions::default()).unwrap();
    let (b, _) = evaluate(&p, &queries(), None, &EvalOptions::default()).unwrap();
    assert_eq!(a, b);
    let ids: Vec<_> = traces.iter().map(|t| t.query_id.as_str()).collect();
    assert_eq!(ids, ["q1", "q2", "q3"]);
    assert_eq!(a.metrics["hit_rate@10"], 1.0);
    assert_eq!(a.counts["queries"], 3);
    assert_eq!(a.counts["retrieval_evaluated"], 3);
    assert!(a.metrics.contains_key("f1") && a.metrics.contains_key("em"));
    assert_eq!(a.latency.total.mean, 0.0);
}

#[test]
fn gated_queries_evaluate_as_empty_runs() {
    let p = pipeline(BEST_PERFORMANCE);
    let gated = Query {
        task_label: Some("translation".into()),
        ..query("q9", "Translate this sentence.", "paris", "x")
    };
    let (report, traces) = evaluate(&p, &[gated], None, &EvalOptions::default()).unwrap();
    assert!(!traces[0].retrieved());
    assert_eq!(report.counts["retrieval_skipped"], 1);
    assert_eq!(report.metrics["recall@10"], 0.0);
}

#[test]
fn run_dir_contains_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(BEST_PERFORMANCE);
    let issues = vec![crate::eval::LineIssue {
        line: 4,
        message: "bad".into(),
    }];
    let report = run_eval(&p, &queries(), None, issues, &EvalOptions::default(), dir.path()).unwrap();
    assert_eq!(report.counts["malformed_lines"], 1);
    for f in [CONFIG_FILE, TRACES_FILE, REPORT_JSON, REPORT_MD] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let cfg = PipelineConfig::load(&dir.path().join(CONFIG_FILE)).unwrap();
    assert_eq!(&cfg, p.config());
    let traces = std::fs::read_to_string(dir.path().join(TRACES_FILE)).unwrap();
    let first: PipelineTrace = serde_json::from_str(traces.lines().next().unwrap()).unwrap();
    assert_eq!(first.query_id, "q1");
}

#[test]
fn ablation_variants_change_one_field() {
    let base = config(BEST_PERFORMANCE);
    let groups = ablation_variants(&base);
    let modules: Vec<_> = groups.iter().map(|(m, _)| *m).collect();
    assert_eq!(modules, ["classification", "retrieval", "reranking", "repacking", "summarization"]);
    let b = serde_json::to_value(&base).unwrap();
    for (module, rows) in &groups {
        assert_eq!(rows.iter().filter(|(_, c)| *c == base).count(), 1, "{module} lists the base once");
        for (name, cfg) in rows {
            let a = serde_json::to_value(cfg).unwrap();
            let diff = a.as_object().unwrap().iter().filter(|(k, v)| b[k.as_str()] != **v).count();
            assert!(diff <= 1, "{module}: {name}");
        }
    }
    let names: Vec<_> = groups.iter().flat_map(|(_, r)| r.iter().map(|(n, _)| n.as_str())).collect();
    for expected in ["w/o classification", "+ hybrid_hyde", "w/o reranking", "+ sides", "w/o summarization"] {
        assert!(names.contains(&expected), "{expected} in {names:?}");
    }
}

#[test]
fn ablation_table_skips_variants_without_components() {
    let mut c = Arc::try_unwrap(components(MockChat::echo_top_doc())).ok().unwrap();
    c.tilde = None;
    let p = Pipeline::new(config(BEST_PERFORMANCE), Arc::new(c)).unwrap();
    let table = ablation_sweep(&p, &queries(), None, &EvalOptions::default()).unwrap();
    assert_eq!(table.skipped.len(), 1);
    assert!(table.skipped[0].starts_with("reranking: + tilde"));
    let listed: usize = ablation_variants(p.config()).iter().map(|(_, r)| r.len()).sum();
    assert_eq!(table.rows().count() + 1, listed);
    let rerank = &table.groups[2];
    assert_eq!(rerank.selected.as_deref(), Some("+ dlm"));
    // Rows sharing the base configuration report identical numbers.
    let selected: Vec<_> = table
        .groups
        .iter()
        .map(|g| g.rows.iter().find(|r| Some(&r.name) == g.selected.as_ref()).unwrap().metrics.clone())
        .collect();
    assert!(selected.windows(2).all(|w| w[0] == w[1]));
    let md = table.to_markdown();
    assert!(md.contains("| w/o reranking |") && md.contains("| + dlm (selected) |"));
    assert!(md.contains("### summarization module"));
}

#[test]
fn alpha_sweep_matches_direct_evaluation() {
    let p = pipeline(BALANCED_EFFICIENCY);
    let qs = queries();
    let qrels = qrels_from_queries(&qs).unwrap();
    let metrics = [MetricSpec::Recall(10), MetricSpec::Map];
    let dir = tempfile::tempdir().unwrap();
    let cache = CandidateCache::new(dir.path()).unwrap();
    let rows = alpha_sweep(&p, &[0.0, 0.3, 1.0], &qs, &qrels, Some(&cache), &metrics).unwrap();
    let again = alpha_sweep(&p, &[0.0, 0.3, 1.0], &qs, &qrels, Some(&cache), &metrics).unwrap();
    let uncached = alpha_sweep(&p, &[0.0, 0.3, 1.0], &qs, &qrels, None, &metrics).unwrap();
    assert_eq!(rows, again);
    assert_eq!(rows, uncached);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), qs.len());
    assert_eq!(rows[1].name, "alpha=0.3");
    let direct = p
        .with_config(PipelineConfig {
            alpha: 0.3,
            ..p.config().clone()
        })
        .unwrap();
    let options = EvalOptions {
        generate: false,
        metrics: metrics.to_vec(),
    };
    let (report, _) = evaluate(&direct, &qs, Some(&qrels), &options).unwrap();
    assert_eq!(rows[1].metrics, report.metrics);
}

#[test]
fn alpha_sweep_rejects_bad_input() {
    let qs = queries();
    let qrels = qrels_from_queries(&qs).unwrap();
    let p = pipeline(BALANCED_EFFICIENCY);
    assert!(alpha_sweep(&p, &[], &qs, &qrels, None, &[MetricSpec::Map]).is_err());
    let dense_only = p
        .with_config(PipelineConfig {
            retrieval: RetrievalMode::Original,
            ..p.config().clone()
        })
        .unwrap();
    assert!(alpha_sweep(&dense_only, &[0.3], &qs, &qrels, None, &[MetricSpec::Map]).is_err());
}

#[test]
fn doc_unit_keeps_best_chunk_per_document() {
    let store = ChunkStore::new(
        docs()
            .iter()
            .flat_map(|d| crate::corpus::chunk_tokens(d, 4, 0).unwrap())
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let p = Pipeline::new(config(BALANCED_EFFICIENCY), Arc::new(Components::offline(store, MockChat::echo(), MockChat::echo()).with_built_indices().unwrap())).unwrap();
    let trace = p.run_to(&queries()[1], StopAfter::Retrieve);
    let list = trace.candidates.unwrap();
    let docs = to_eval_unit(&list, &p.components().store, EvalUnit::Doc);
    let ids = docs.ids();
    let mut unique = ids.clone();
    unique.sort_unstable();
    unique.dedup();
    assert_eq!(ids.len(), unique.len());
    assert_eq!(ids[0], "paris");
}

#[test]
fn queries_load_leniently_and_sample_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.jsonl");
    std::fs::write(
        &path,
        "{\"id\":\"b\",\"text\":\"two\"}\nnot json\n\n{\"id\":\"a\",\"text\":\"one\"}\n{\"id\":\"c\",\"text\":\"  \"}\n{\"id\":\"a\",\"text\":\"dup\"}\n",
    )
    .unwrap();
    let (qs, issues) = read_queries(&path).unwrap();
    assert_eq!(qs.len(), 2);
    assert_eq!(issues.iter().map(|i| i.line).collect::<Vec<_>>(), [2, 5, 6]);

    let many: Vec<Query> = (0..50).map(|i| Query::new(format!("q{i:02}"), "x")).collect();
    let a = sample_queries(many.clone(), 10, 7);
    assert_eq!(a, sample_queries(many.clone(), 10, 7));
    assert_ne!(a, sample_queries(many.clone(), 10, 8));
    assert!(a.windows(2).all(|w| w[0].id < w[1].id));
    assert_eq!(sample_queries(many, 100, 7).len(), 50);
}

#[test]
fn explicit_qrels_override_gold_ids() {
    let p = pipeline(BALANCED_EFFICIENCY);
    let mut qrels = Qrels::new(1);
    qrels.insert("q1", "tokyo", 1);
    let options = EvalOptions {
        generate: false,
        metrics: vec![MetricSpec::Recall(10)],
    };
    let (report, _) = evaluate(&p, &queries(), Some(&qrels), &options).unwrap();
    assert_eq!(report.counts["retrieval_evaluated"], 1);
    assert_eq!(report.counts["no_judgments"], 2);
    assert!(!report.metrics.contains_key("f1"));
}
