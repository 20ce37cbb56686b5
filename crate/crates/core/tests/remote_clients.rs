mod common;

use std::sync::Arc;

use common::{completion, MockServer};
use serde_json::{json, Value};

use ragpipe::client::{CachedChat, ChatClient, ChatRequest, ClientError, Endpoint, OpenAiChat, RetryPolicy};
use ragpipe::corpus::{chunk_sentences, ChunkStore, Document};
use ragpipe::dense::{deterministic_embed, Embedder, RemoteEmbedder};
use ragpipe::pipeline::{
    preset, Backends, ChatSpec, Components, EmbedderSpec, Pipeline, PipelineConfig, ScorerSpec, TimingMode,
    BEST_PERFORMANCE,
};
use ragpipe::rerank::{rerank_dlm, RelevanceScorer, RemoteReranker};
use ragpipe::scored::{Provenance, ScoredEntry, ScoredList};
use ragpipe::transform::Query;

fn fast() -> RetryPolicy {
    RetryPolicy {
        retries: 3,
        initial_backoff_ms: 1,
        timeout_ms: 5_000,
    }
}

fn endpoint(server: &MockServer, key_env: &str) -> Endpoint {
    Endpoint {
        api_key_env: key_env.to_string(),
        ..Endpoint::new(&server.url, "test-model")
    }
}

#[test]
fn chat_request_shape_and_bearer_auth() {
    let server = MockServer::start(|_, _| (200, completion("Paris")));
    std::env::set_var("RAGPIPE_TEST_KEY_CHAT", "secret-token");
    let client = OpenAiChat::new(&endpoint(&server, "RAGPIPE_TEST_KEY_CHAT"), fast()).unwrap();
    let out = client.complete(&ChatRequest::new("Capital of France?", 100, 0.0)).unwrap();
    assert_eq!(out, "Paris");
    let req = &server.requests()[0];
    assert_eq!(req.path, "/chat/completions");
    assert_eq!(req.authorization.as_deref(), Some("Bearer secret-token"));
    assert_eq!(req.body["model"], "test-model");
    assert_eq!(req.body["max_tokens"], 100);
    assert_eq!(req.body["temperature"], 0.0);
    assert_eq!(req.body["messages"][0]["content"], "Capital of France?");
}

#[test]
fn no_key_means_no_authorization_header() {
    let server = MockServer::start(|_, _| (200, completion("ok")));
    let client = OpenAiChat::new(&endpoint(&server, "RAGPIPE_TEST_KEY_UNSET"), fast()).unwrap();
    client.complete(&ChatRequest::new("x", 5, 0.0)).unwrap();
    assert!(server.requests()[0].authorization.is_none());
}

#[test]
fn server_errors_are_retried_with_backoff() {
    let server = MockServer::start(|n, _| if n < 2 { (503, json!({"error": "busy"})) } else { (200, completion("done")) });
    let client = OpenAiChat::new(&endpoint(&server, "NONE"), fast()).unwrap();
    assert_eq!(client.complete(&ChatRequest::new("x", 5, 0.0)).unwrap(), "done");
    assert_eq!(server.hits(), 3);
}

#[test]
fn retries_are_bounded_and_reported() {
    let server = MockServer::start(|_, _| (429, json!({"error": "slow down"})));
    let client = OpenAiChat::new(&endpoint(&server, "NONE"), fast()).unwrap();
    let err = client.complete(&ChatRequest::new("x", 5, 0.0)).unwrap_err();
    assert!(matches!(err, ClientError::Status { status: 429, attempts: 4, retries: 3, .. }), "{err:?}");
    assert_eq!(server.hits(), 4);
}

#[test]
fn client_errors_fail_immediately() {
    let server = MockServer::start(|_, _| (400, json!({"error": "bad request"})));
    let client = OpenAiChat::new(&endpoint(&server, "NONE"), fast()).unwrap();
    let err = client.complete(&ChatRequest::new("x", 5, 0.0)).unwrap_err();
    assert!(matches!(err, ClientError::Status { status: 400, attempts: 1, .. }));
    assert_eq!(server.hits(), 1);
}

#[test]
fn malformed_responses_are_decode_errors() {
    let server = MockServer::start(|_, _| (200, json!({"choices": []})));
    let client = OpenAiChat::new(&endpoint(&server, "NONE"), fast()).unwrap();
    let err = client.complete(&ChatRequest::new("x", 5, 0.0)).unwrap_err();
    assert!(matches!(err, ClientError::Decode(_)));
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let client = OpenAiChat::new(&Endpoint::new(format!("http://127.0.0.1:{port}"), "m"), fast()).unwrap();
    let err = client.complete(&ChatRequest::new("x", 5, 0.0)).unwrap_err();
    assert!(matches!(err, ClientError::Transport { attempts: 4, .. }), "{err:?}");
}

#[test]
fn cache_serves_repeats_without_network() {
    let server = MockServer::start(|_, _| (200, completion("cached answer")));
    let dir = tempfile::tempdir().unwrap();
    let client = CachedChat::new(OpenAiChat::new(&endpoint(&server, "NONE"), fast()).unwrap(), dir.path()).unwrap();
    let req = ChatRequest::new("same prompt", 10, 0.0);
    assert_eq!(client.complete(&req).unwrap(), "cached answer");
    assert_eq!(client.complete(&req).unwrap(), "cached answer");
    assert_eq!(server.hits(), 1);
    client.complete(&ChatRequest::new("same prompt", 11, 0.0)).unwrap();
    assert_eq!(server.hits(), 2);
}

fn embedding_response(body: &Value, dim: usize) -> Value {
    let inputs = body["input"].as_array().unwrap();
    // Reverse the data order; clients must place vectors by `index`.
    let data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .rev()
        .map(|(i, t)| json!({"index": i, "embedding": deterministic_embed(t.as_str().unwrap(), dim).values()}))
        .collect();
    json!({"data": data})
}

#[test]
fn embeddings_are_batched_and_reordered() {
    let server = MockServer::start(|_, r| (200, embedding_response(&r.body, 32)));
    let embedder = RemoteEmbedder::new(&endpoint(&server, "NONE"), 32, fast()).unwrap().with_parallelism(2);
    let texts: Vec<String> = (0..150).map(|i| format!("passage number {i}")).collect();
    let vectors = embedder.embed_batch(&texts).unwrap();
    assert_eq!(server.hits(), 3);
    let mut sizes: Vec<usize> = server.requests().iter().map(|r| r.body["input"].as_array().unwrap().len()).collect();
    sizes.sort_unstable();
    assert_eq!(sizes, [22, 64, 64]);
    for (t, v) in texts.iter().zip(&vectors) {
        assert_eq!(v, &deterministic_embed(t, 32));
    }
    assert_eq!(embedder.tag(), "remote:test-model");
}

#[test]
fn embedding_dimension_mismatch_is_rejected() {
    let server = MockServer::start(|_, r| (200, embedding_response(&r.body, 16)));
    let embedder = RemoteEmbedder::new(&endpoint(&server, "NONE"), 32, fast()).unwrap();
    assert!(embedder.embed_batch(&["abc".to_string()]).is_err());
}

fn candidates(n: usize) -> (ScoredList, ChunkStore) {
    let docs: Vec<Document> = (0..n).map(|i| Document::new(format!("d{i:02}"), format!("passage {i} text."))).collect();
    let chunks: Vec<_> = docs.iter().flat_map(|d| chunk_sentences(d, 64).unwrap()).collect();
    let entries = chunks
        .iter()
        .enumerate()
        .map(|(i, c)| ScoredEntry::new(c.id.clone(), 1.0 - i as f64 / 100.0, Provenance::Sparse))
        .collect();
    (ScoredList::ranked("q", "retrieve", entries, n), ChunkStore::new(chunks).unwrap())
}

#[test]
fn reranker_protocol_and_reversal() {
    // Scores rise with input position, so the output reverses the input.
    let server = MockServer::start(|_, r| {
        let n = r.body["passages"].as_array().unwrap().len();
        let first = r.body["passages"][0].as_str().unwrap();
        let offset: f64 = first.split(' ').nth(1).and_then(|w| w.parse().ok()).unwrap_or(0.0);
        (200, json!({"scores": (0..n).map(|i| (offset + i as f64) / 100.0).collect::<Vec<_>>()}))
    });
    let scorer = RemoteReranker::new(&endpoint(&server, "NONE"), fast()).unwrap();
    let (list, store) = candidates(20);
    let out = rerank_dlm(&scorer, &Query::new("q", "passage"), &list, &store, 20, 2).unwrap();
    assert!(!out.is_fallback());
    let ids: Vec<_> = out.value.ids();
    let mut expected = list.ids();
    expected.reverse();
    assert_eq!(ids, expected);
    assert_eq!(server.hits(), 2);
    assert_eq!(server.requests()[0].path, "/rerank");
    assert_eq!(scorer.score("q", &["a".into()]).unwrap().len(), 1);
}

#[test]
fn failed_rerank_batch_keeps_first_stage_scores() {
    let server = MockServer::start(|_, r| {
        let first = r.body["passages"][0].as_str().unwrap().to_string();
        if first.starts_with("passage 16 ") {
            (400, json!({"error": "nope"}))
        } else {
            let n = r.body["passages"].as_array().unwrap().len();
            (200, json!({"scores": vec![0.5; n]}))
        }
    });
    let scorer = RemoteReranker::new(&endpoint(&server, "NONE"), fast()).unwrap();
    let (list, store) = candidates(20);
    let out = rerank_dlm(&scorer, &Query::new("q", "passage"), &list, &store, 20, 4).unwrap();
    assert!(out.is_fallback());
    let kept = out.value.entries.iter().find(|e| e.chunk == "d16#0").unwrap();
    assert_eq!(kept.score, list.entries[16].score);
    assert_eq!(kept.provenance, Provenance::Sparse);
}

#[test]
fn pipeline_runs_against_remote_backends() {
    let server = MockServer::start(|_, r| match r.path.as_str() {
        "/chat/completions" => {
            let prompt = r.body["messages"][0]["content"].as_str().unwrap();
            let answer = if prompt.starts_with("Answer the question") {
                "Paris"
            } else {
                "Paris is the capital of France."
            };
            (200, completion(answer))
        }
        "/embeddings" => (200, embedding_response(&r.body, 64)),
        "/rerank" => {
            let scores: Vec<f64> = r.body["passages"]
                .as_array()
                .unwrap()
                .iter()
                .map(|p| if p.as_str().unwrap().contains("France") { 0.9 } else { 0.1 })
                .collect();
            (200, json!({"scores": scores}))
        }
        _ => (404, json!({})),
    });
    let chat = ChatSpec::Openai {
        url: server.url.clone(),
        model: "gen".into(),
        api_key_env: None,
    };
    let config = PipelineConfig {
        timing: TimingMode::Logical,
        first_stage_k: 4,
        rerank_k: 2,
        backends: Backends {
            generator: chat.clone(),
            assistant: chat,
            embedder: EmbedderSpec::Remote {
                url: server.url.clone(),
                model: "emb".into(),
                dim: 64,
                api_key_env: None,
            },
            reranker: ScorerSpec::Remote {
                url: server.url.clone(),
                model: "rr".into(),
                api_key_env: None,
            },
            ..Backends::default()
        },
        ..preset(BEST_PERFORMANCE).unwrap()
    };
    let docs = [
        Document::new("paris", "Paris is the capital of France. It has the Louvre."),
        Document::new("rome", "Rome is the capital of Italy. It has the Colosseum."),
        Document::new("oslo", "Oslo is the capital of Norway. It has fjords."),
    ];
    let store = ChunkStore::new(docs.iter().flat_map(|d| chunk_sentences(d, 64).unwrap())).unwrap();
    let components = Components::from_backends(&config, store).unwrap().with_built_indices().unwrap();
    let pipeline = Pipeline::new(config, Arc::new(components)).unwrap();
    let trace = pipeline.run(&Query::new("q1", "What is the capital of France?"));
    assert!(trace.error.is_none(), "{:?}", trace.error);
    assert_eq!(trace.reranked.as_ref().unwrap().entries[0].chunk, "paris#0");
    assert_eq!(trace.answer.as_deref(), Some("Paris"));
    assert!(trace.notes.is_empty(), "remote assistant summarizes abstractively");
    assert_eq!(trace.summary.as_deref(), Some("Paris is the capital of France."));
    let paths: std::collections::BTreeSet<String> = server.requests().into_iter().map(|r| r.path).collect();
    assert_eq!(paths.into_iter().collect::<Vec<_>>(), ["/chat/completions", "/embeddings", "/rerank"]);
}
